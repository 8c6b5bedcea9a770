use nalgebra::DMatrix;
use rayon::prelude::*;

use super::binio::{Reader, Writer};
use crate::composition::WordTopicTable;
use crate::error::{Error, Result};

/// Relative singular-value cutoff defining numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Number of components kept for a block of numerical rank `rank` under
/// the rule attached to `target` output dimension.
pub fn pca_rank_rule(target: usize, rank: usize) -> Result<usize> {
    let (threshold, reduced) = match target {
        500 => (10, 10),
        1000 => (20, 15),
        2000 => (100, 30),
        3000 => (100, 50),
        _ => {
            return Err(Error::Config(format!(
                "PCA target dimension must be one of 500, 1000, 2000, 3000 (got {target})"
            )))
        }
    };
    Ok(if rank > threshold { reduced } else { rank })
}

/// Principal components of one `d`-dimensional block.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBlock {
    pub mean: Vec<f64>,
    /// `width × d`, one orthonormal component per row.
    pub basis: Vec<f64>,
    pub width: usize,
    pub rank: usize,
    /// `mean · component` for each kept component.
    offset: Vec<f64>,
}

impl PcaBlock {
    fn new(mean: Vec<f64>, basis: Vec<f64>, width: usize, rank: usize) -> Self {
        let d = mean.len();
        let offset = (0..width)
            .map(|c| crate::linalg::dot(&mean, &basis[c * d..(c + 1) * d]))
            .collect();
        Self {
            mean,
            basis,
            width,
            rank,
            offset,
        }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let d = self.mean.len();
        &self.basis[c * d..(c + 1) * d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaSubspace {
    pub d: usize,
    pub target: usize,
    pub blocks: Vec<PcaBlock>,
}

impl PcaSubspace {
    pub fn in_dim(&self) -> usize {
        self.d * self.blocks.len()
    }

    pub fn out_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    /// Concatenated per-block projections of the centered input.
    pub fn encode_sparse(&self, indices: &[u32], values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.out_dim());
        let mut pos = 0;
        for (bi, block) in self.blocks.iter().enumerate() {
            let hi = ((bi + 1) * self.d) as u32;
            let start = pos;
            while pos < indices.len() && indices[pos] < hi {
                pos += 1;
            }
            for c in 0..block.width {
                let comp = block.component(c);
                let mut s = -block.offset[c];
                for (&i, &v) in indices[start..pos].iter().zip(&values[start..pos]) {
                    s += v * comp[i as usize - bi * self.d];
                }
                out.push(s);
            }
        }
        out
    }

    pub(super) fn write(&self, w: &mut Writer) {
        w.u64(self.d as u64);
        w.u64(self.target as u64);
        w.u64(self.blocks.len() as u64);
        for b in &self.blocks {
            w.u64(b.width as u64);
            w.u64(b.rank as u64);
            w.f64s(&b.mean);
            w.f64s(&b.basis);
        }
    }

    pub(super) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let (d, target, n) = (r.usize()?, r.usize()?, r.usize()?);
        let mut blocks = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let (width, rank) = (r.usize()?, r.usize()?);
            let mean = r.f64s(d)?;
            let basis = r.f64s(width * d)?;
            blocks.push(PcaBlock::new(mean, basis, width, rank));
        }
        Ok(Self { d, target, blocks })
    }
}

/// Fits PCA independently on each `d`-dimensional block of the table.
///
/// Rows with no stored entry in a block are all equal after centering, so
/// they are folded into a single row scaled by the square root of their
/// count. This leaves the singular values and right singular vectors of the
/// centered block unchanged.
pub fn fit_pca_subspace(table: &WordTopicTable, target: usize) -> Result<PcaSubspace> {
    pca_rank_rule(target, 0)?;
    let (k, d, v) = (table.k, table.d, table.len());
    if v == 0 || d == 0 {
        return Err(Error::Data("PCA needs a non-empty table".into()));
    }
    let blocks = (0..k)
        .into_par_iter()
        .map(|b| fit_block(table, b, target))
        .collect::<Result<Vec<_>>>()?;
    let model = PcaSubspace { d, target, blocks };
    let empty = model.blocks.iter().filter(|b| b.width == 0).count();
    if empty > 0 {
        log::warn!("{empty} of {k} PCA blocks have zero variance and contribute no dimensions");
    }
    Ok(model)
}

fn fit_block(table: &WordTopicTable, b: usize, target: usize) -> Result<PcaBlock> {
    let (d, v) = (table.d, table.len());
    let mut explicit: Vec<Vec<f64>> = Vec::new();
    for i in 0..v {
        explicit.extend(table.block(i, b).map(<[f64]>::to_vec));
    }
    let mut mean = vec![0.0; d];
    for r in &explicit {
        crate::linalg::axpy(1.0, r, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= v as f64);
    let implicit = v - explicit.len();
    let n_rows = explicit.len() + usize::from(implicit > 0);
    let mut m = DMatrix::<f64>::zeros(n_rows, d);
    for (r, row) in explicit.iter().enumerate() {
        for j in 0..d {
            m[(r, j)] = row[j] - mean[j];
        }
    }
    if implicit > 0 {
        let s = (implicit as f64).sqrt();
        for j in 0..d {
            m[(n_rows - 1, j)] = -s * mean[j];
        }
    }
    let svd = m.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD failed to produce right singular vectors".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &c| sv[c].total_cmp(&sv[a]).then(a.cmp(&c)));
    let smax = order.first().map_or(0.0, |&i| sv[i]);
    let rank = if smax > 0.0 {
        sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
    } else {
        0
    };
    let width = pca_rank_rule(target, rank)?.min(rank);
    let mut basis = Vec::with_capacity(width * d);
    for &c in order.iter().take(width) {
        basis.extend(vt.row(c).iter());
    }
    Ok(PcaBlock::new(mean, basis, width, rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_rules() {
        assert_eq!(pca_rank_rule(2000, 4).unwrap(), 4);
        assert_eq!(pca_rank_rule(2000, 101).unwrap(), 30);
        assert_eq!(pca_rank_rule(500, 11).unwrap(), 10);
        assert_eq!(pca_rank_rule(500, 10).unwrap(), 10);
        assert_eq!(pca_rank_rule(1000, 21).unwrap(), 15);
        assert_eq!(pca_rank_rule(1000, 20).unwrap(), 20);
        assert_eq!(pca_rank_rule(3000, 150).unwrap(), 50);
        assert!(pca_rank_rule(1234, 5).is_err());
    }

    #[test]
    fn identical_rows_give_width_zero() {
        let data: Vec<f64> = [1.0, 2.0, 3.0].repeat(5);
        let tokens = (0..5).map(|i| format!("w{i}")).collect();
        let table = WordTopicTable::from_dense(tokens, 1, 3, 1, &data).unwrap();
        let m = fit_pca_subspace(&table, 2000).unwrap();
        assert_eq!(m.blocks[0].width, 0);
        assert_eq!(m.out_dim(), 0);
        assert!(m.encode_sparse(&[0], &[1.0]).is_empty());
    }

    #[test]
    fn all_zero_block_is_empty() {
        let mut data = vec![0.0; 6 * 4];
        for i in 0..6 {
            data[i * 4] = i as f64;
            data[i * 4 + 1] = (i * i) as f64;
        }
        let tokens = (0..6).map(|i| format!("w{i}")).collect();
        let table = WordTopicTable::from_dense(tokens, 2, 2, 1, &data).unwrap();
        let m = fit_pca_subspace(&table, 500).unwrap();
        assert_eq!(m.blocks[0].width, 2);
        assert_eq!(m.blocks[1].width, 0);
    }

    fn rng_table(v: usize, k: usize, d: usize, rank: usize, seed: u64) -> WordTopicTable {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dirs: Vec<Vec<f64>> = (0..k * rank)
            .map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let mut data = vec![0.0; v * k * d];
        for i in 0..v {
            for b in 0..k {
                // roughly a third of the rows leave each block empty
                if rng.random_bool(0.35) {
                    continue;
                }
                for r in 0..rank {
                    let a = rng.random::<f64>() * 2.0 - 1.0;
                    for j in 0..d {
                        data[i * k * d + b * d + j] += a * dirs[b * rank + r][j];
                    }
                }
            }
        }
        let tokens = (0..v).map(|i| format!("w{i}")).collect();
        WordTopicTable::from_dense(tokens, k, d, 3, &data).unwrap()
    }

    fn block_rows(table: &WordTopicTable, b: usize) -> DMatrix<f64> {
        let d = table.d;
        let dense = table.to_dense();
        DMatrix::from_fn(table.len(), d, |i, j| dense[i * table.dim() + b * d + j])
    }

    /// Squared reconstruction error of the centered rows projected onto the
    /// row space of `basis` (`w × d`, orthonormal rows).
    fn reconstruction_error(x: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
        let mean = x.row_mean();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        let proj = &c * basis.transpose() * basis;
        (c - proj).norm_squared()
    }

    #[test]
    fn numerical_rank_four_keeps_four() {
        // implicit zero rows add the mean direction, so use one all-filled block
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let d = 12;
        let dirs: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let data: Vec<f64> = (0..40)
            .flat_map(|_| {
                let a: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
                (0..d).map(|j| 1.0 + (0..4).map(|r| a[r] * dirs[r][j]).sum::<f64>()).collect::<Vec<_>>()
            })
            .collect();
        let tokens = (0..40).map(|i| format!("w{i}")).collect();
        let table = WordTopicTable::from_dense(tokens, 1, d, 1, &data).unwrap();
        let m = fit_pca_subspace(&table, 2000).unwrap();
        assert_eq!(m.blocks[0].rank, 4);
        assert_eq!(m.blocks[0].width, 4);
    }

    #[test]
    fn bases_are_orthonormal() {
        let table = rng_table(80, 3, 10, 5, 1);
        let m = fit_pca_subspace(&table, 2000).unwrap();
        for block in &m.blocks {
            let b = DMatrix::from_row_slice(block.width, table.d, &block.basis);
            let gram = &b * b.transpose();
            let err = (gram - DMatrix::identity(block.width, block.width)).abs().max();
            assert!(err < 1e-8, "gram error {err}");
        }
    }

    #[test]
    fn beats_random_orthonormal_projections() {
        use rand::{Rng, SeedableRng};
        let table = rng_table(60, 2, 10, 12, 2);
        // 500 rule keeps 10 of the rank-10 blocks: use a tighter case
        let m = fit_pca_subspace(&table, 500).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (bi, block) in m.blocks.iter().enumerate() {
            let x = block_rows(&table, bi);
            let w = block.width.min(table.d - 1).max(1);
            let pca = DMatrix::from_row_slice(block.width, table.d, &block.basis).rows(0, w).into_owned();
            let ours = reconstruction_error(&x, &pca);
            for _ in 0..20 {
                let g = DMatrix::from_fn(table.d, w, |_, _| rng.random::<f64>() - 0.5);
                let q = g.qr().q().transpose();
                assert!(ours <= reconstruction_error(&x, &q) + 1e-9);
            }
        }
    }

    #[test]
    fn encode_matches_dense_projection() {
        let table = rng_table(30, 3, 6, 2, 4);
        let m = fit_pca_subspace(&table, 1000).unwrap();
        let dense = table.to_dense();
        for i in 0..table.len() {
            let (idx, val) = table.row(i);
            let got = m.encode_sparse(&idx, val);
            let mut want = Vec::new();
            for (b, block) in m.blocks.iter().enumerate() {
                let x = &dense[i * table.dim() + b * table.d..i * table.dim() + (b + 1) * table.d];
                for c in 0..block.width {
                    let centered: Vec<f64> = x.iter().zip(&block.mean).map(|(a, m)| a - m).collect();
                    want.push(crate::linalg::dot(&centered, block.component(c)));
                }
            }
            assert_eq!(got.len(), m.out_dim());
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
