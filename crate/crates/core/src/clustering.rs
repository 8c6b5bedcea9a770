//! Full-covariance Gaussian mixture over word vectors, word-cluster
//! posteriors, and top-`l` sparsification of those posteriors.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const COLLAPSE_WEIGHT: f64 = 1e-8;
const MAX_REINITS: usize = 3;
const MODEL_MAGIC: &[u8; 8] = b"SCDVGMM\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub seed: u64,
    /// Added to every covariance diagonal after each M-step.
    pub reg_eps: f64,
    pub max_iter: usize,
    /// Stop once the mean per-point log-likelihood improves by less.
    pub tol: f64,
    /// Lloyd iterations run after k-means++ seeding.
    pub kmeans_iters: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 60,
            seed: 1,
            reg_eps: 1e-4,
            max_iter: 100,
            tol: 1e-4,
            kmeans_iters: 10,
        }
    }
}

/// A fitted mixture. Each component caches the inverse of its Cholesky
/// factor and its log-determinant.
#[derive(Debug, Clone)]
pub struct GmmModel {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    chol_inv: Vec<DMatrix<f64>>,
    log_dets: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean per-point log-likelihood, starting with the initialization.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub reinitializations: usize,
    /// Indices into `log_likelihood` right after a component was
    /// reinitialized; monotonicity is not expected across those steps.
    pub reinit_steps: Vec<usize>,
}

impl GmmModel {
    /// Builds a model, factorizing every covariance.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::Data("mixture components are inconsistent".into()));
        }
        let dim = means[0].len();
        let mut chol_inv = Vec::with_capacity(k);
        let mut log_dets = Vec::with_capacity(k);
        for (c, cov) in covariances.iter().enumerate() {
            if cov.nrows() != dim || cov.ncols() != dim || means[c].len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: cov.nrows(),
                });
            }
            let chol = cov.clone().cholesky().ok_or_else(|| {
                Error::Numeric(format!("covariance of component {c} is not positive definite"))
            })?;
            let l = chol.l();
            log_dets.push(2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>());
            let inv = l
                .solve_lower_triangular(&DMatrix::identity(dim, dim))
                .ok_or_else(|| Error::Numeric(format!("singular factor in component {c}")))?;
            chol_inv.push(inv);
        }
        Ok(Self {
            dim,
            weights,
            means,
            covariances,
            chol_inv,
            log_dets,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, c: usize) -> &DVector<f64> {
        &self.means[c]
    }

    pub fn covariance(&self, c: usize) -> &DMatrix<f64> {
        &self.covariances[c]
    }

    /// `n × K` matrix of `log π_k + log N(x_i; μ_k, Σ_k)`.
    fn weighted_log_densities(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let n = data.nrows();
        let mut out = DMatrix::zeros(n, self.k());
        let mut centered = data.clone();
        for c in 0..self.k() {
            centered.copy_from(data);
            for j in 0..self.dim {
                let m = self.means[c][j];
                centered.column_mut(j).add_scalar_mut(-m);
            }
            // rows of z are L^{-1}(x_i - μ)
            let z = &centered * self.chol_inv[c].transpose();
            let base = self.weights[c].ln() - 0.5 * (self.dim as f64 * LN_2PI + self.log_dets[c]);
            for i in 0..n {
                let mahal = z.row(i).norm_squared();
                out[(i, c)] = base - 0.5 * mahal;
            }
        }
        out
    }

    /// Posterior responsibilities and the mean per-point log-likelihood.
    fn responsibilities(&self, data: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let mut logp = self.weighted_log_densities(data);
        let n = data.nrows();
        let mut total = 0.0;
        for i in 0..n {
            let mut row = logp.row_mut(i);
            let vals: Vec<f64> = row.iter().copied().collect();
            let lse = log_sum_exp(&vals);
            total += lse;
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - lse).exp();
                sum += *x;
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
        (logp, total / n as f64)
    }

    /// Mean per-point log-likelihood of `rows` (`n × dim`, row-major).
    pub fn log_likelihood(&self, rows: &[f64]) -> f64 {
        let data = to_matrix(rows, self.dim);
        self.responsibilities(&data).1
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.k() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for c in 0..self.k() {
            buf.extend_from_slice(&self.weights[c].to_le_bytes());
            for x in self.means[c].iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            // lower triangle, row by row
            for i in 0..self.dim {
                for j in 0..=i {
                    buf.extend_from_slice(&self.covariances[c][(i, j)].to_le_bytes());
                }
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let corrupt = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
        if bytes.len() < 20 || &bytes[..8] != MODEL_MAGIC {
            return Err(corrupt("not a mixture model file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if u32_at(8) != MODEL_VERSION {
            return Err(corrupt("unsupported model version"));
        }
        let (k, dim) = (u32_at(12) as usize, u32_at(16) as usize);
        let per = 1 + dim + dim * (dim + 1) / 2;
        if bytes.len() != 20 + 8 * k * per {
            return Err(corrupt("truncated model file"));
        }
        let mut vals = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for _ in 0..k {
            weights.push(vals.next().unwrap());
            means.push(DVector::from_iterator(dim, vals.by_ref().take(dim)));
            let mut cov = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..=i {
                    let v = vals.next().unwrap();
                    cov[(i, j)] = v;
                    cov[(j, i)] = v;
                }
            }
            covs.push(cov);
        }
        Self::new(weights, means, covs)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn to_matrix(rows: &[f64], dim: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows.len() / dim, dim, rows)
}

/// Weighted means and covariances from responsibilities (`n × K`).
/// Returns `None` for components whose weight fell below the collapse
/// threshold.
fn m_step(
    data: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    reg_eps: f64,
) -> (Vec<f64>, Vec<Option<(DVector<f64>, DMatrix<f64>)>>) {
    let (n, dim) = data.shape();
    let k = resp.ncols();
    let mut weights = Vec::with_capacity(k);
    let mut comps = Vec::with_capacity(k);
    let mut scaled = data.clone();
    for c in 0..k {
        let r = resp.column(c);
        let nk: f64 = r.sum();
        let w = nk / n as f64;
        weights.push(w);
        if w < COLLAPSE_WEIGHT {
            comps.push(None);
            continue;
        }
        let mean: DVector<f64> = data.tr_mul(&r) / nk;
        scaled.copy_from(data);
        for j in 0..dim {
            let m = mean[j];
            let mut col = scaled.column_mut(j);
            for i in 0..n {
                col[i] = (col[i] - m) * r[i].sqrt();
            }
        }
        let mut cov = scaled.tr_mul(&scaled) / nk;
        // exact symmetry
        for i in 0..dim {
            for j in 0..i {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
            cov[(i, i)] += reg_eps;
        }
        comps.push(Some((mean, cov)));
    }
    (weights, comps)
}

fn global_covariance(data: &DMatrix<f64>, reg_eps: f64) -> DMatrix<f64> {
    let n = data.nrows();
    let ones = DMatrix::from_element(n, 1, 1.0 / n as f64);
    let (_, comps) = m_step(data, &ones, reg_eps);
    comps.into_iter().next().flatten().unwrap().1
}

/// The row farthest (Euclidean) from its nearest current mean.
fn farthest_point(data: &DMatrix<f64>, means: &[DVector<f64>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..data.nrows() {
        let x = data.row(i).transpose();
        let nearest = means
            .iter()
            .map(|m| (&x - m).norm_squared())
            .fold(f64::INFINITY, f64::min);
        if nearest > best.1 {
            best = (i, nearest);
        }
    }
    best.0
}

/// Fits a `K`-component mixture to `rows` (`n × dim`, row-major) by EM
/// from a k-means++ initialization.
pub fn fit_gmm(rows: &[f64], dim: usize, config: &GmmConfig) -> Result<GmmFit> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::Data("data length is not a multiple of the dimension".into()));
    }
    let n = rows.len() / dim;
    if config.k == 0 || n <= config.k {
        return Err(Error::Data(format!(
            "need more points ({n}) than mixture components ({})",
            config.k
        )));
    }
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite input vector".into()));
    }
    let data = to_matrix(rows, dim);

    let init = kmeans(rows, dim, config.k, config.seed, config.kmeans_iters);
    let mut resp = DMatrix::zeros(n, config.k);
    for (i, &c) in init.assignments.iter().enumerate() {
        resp[(i, c)] = 1.0;
    }

    let mut reinits = 0;
    let mut reinit_steps = Vec::new();
    let mut model = build_from_resp(&data, &resp, config, &mut reinits, &mut reinit_steps, 0)?;
    let (mut resp, ll0) = model.responsibilities(&data);
    let mut trace = vec![ll0];
    let mut iterations = 0;

    for it in 0..config.max_iter {
        model = build_from_resp(&data, &resp, config, &mut reinits, &mut reinit_steps, it + 1)?;
        let (r, ll) = model.responsibilities(&data);
        resp = r;
        iterations = it + 1;
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if !ll.is_finite() {
            return Err(Error::Numeric("log-likelihood is not finite".into()));
        }
        if !reinit_steps.contains(&(it + 1)) && (ll - prev).abs() < config.tol {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        iterations,
        reinitializations: reinits,
        reinit_steps,
    })
}

fn build_from_resp(
    data: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    config: &GmmConfig,
    reinits: &mut usize,
    reinit_steps: &mut Vec<usize>,
    step: usize,
) -> Result<GmmModel> {
    let (mut weights, comps) = m_step(data, resp, config.reg_eps);
    let mut means: Vec<Option<DVector<f64>>> = Vec::with_capacity(comps.len());
    let mut covs: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(comps.len());
    for comp in comps {
        let (m, c) = comp.unzip();
        means.push(m);
        covs.push(c);
    }
    for c in 0..weights.len() {
        if means[c].is_some() {
            continue;
        }
        *reinits += 1;
        if *reinits > MAX_REINITS {
            return Err(Error::Numeric(format!(
                "mixture component {c} collapsed after {MAX_REINITS} reinitializations"
            )));
        }
        log::warn!("mixture component {c} collapsed; reinitializing from the farthest point");
        let live: Vec<DVector<f64>> = means.iter().flatten().cloned().collect();
        let far = farthest_point(data, &live);
        means[c] = Some(data.row(far).transpose());
        covs[c] = Some(global_covariance(data, config.reg_eps));
        weights[c] = 1.0 / data.nrows() as f64;
        if !reinit_steps.contains(&step) {
            reinit_steps.push(step);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel::new(
        weights,
        means.into_iter().map(Option::unwrap).collect(),
        covs.into_iter().map(Option::unwrap).collect(),
    )
}

/// Posterior `P(c_k | x)` for a single vector, by log-sum-exp.
pub fn posterior(model: &GmmModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim {
        return Err(Error::Dimension {
            expected: model.dim,
            found: x.len(),
        });
    }
    Ok(posteriors(model, x)?.rows.to_vec())
}

/// Posteriors for every row of `rows` (`n × dim`).
pub fn posteriors(model: &GmmModel, rows: &[f64]) -> Result<AssignmentTable> {
    if rows.len() % model.dim != 0 {
        return Err(Error::Dimension {
            expected: model.dim,
            found: rows.len() % model.dim,
        });
    }
    let data = to_matrix(rows, model.dim);
    let (resp, _) = model.responsibilities(&data);
    let n = data.nrows();
    let k = model.k();
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        out.extend(resp.row(i).iter());
    }
    Ok(AssignmentTable { k, rows: out })
}

/// Dense `V × K` word-cluster posteriors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentTable {
    pub k: usize,
    pub rows: Vec<f64>,
}

impl AssignmentTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.k..(i + 1) * self.k]
    }

    /// One line per row: `token p1 .. pK`, full precision.
    pub fn save(&self, tokens: &[String], path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, tok) in tokens.iter().enumerate() {
            out.push_str(tok);
            for p in self.row(i) {
                write!(out, " {p:e}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Vec<String>, Self)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        let mut rows = Vec::new();
        let mut k = None;
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split(' ');
            tokens.push(fields.next().unwrap_or_default().to_string());
            let before = rows.len();
            for f in fields {
                rows.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(path, i + 1, "bad probability"))?,
                );
            }
            let width = rows.len() - before;
            if *k.get_or_insert(width) != width || width == 0 {
                return Err(Error::parse(path, i + 1, "inconsistent number of clusters"));
            }
        }
        let k = k.ok_or_else(|| Error::Data(format!("{}: empty posterior table", path.display())))?;
        Ok((tokens, Self { k, rows }))
    }
}

/// At most `l` `(cluster, probability)` pairs per row, sorted by cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAssignmentTable {
    pub k: usize,
    pub l: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl SparseAssignmentTable {
    pub fn to_dense(&self) -> AssignmentTable {
        let mut rows = vec![0.0; self.rows.len() * self.k];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, p) in row {
                rows[i * self.k + c as usize] = p;
            }
        }
        AssignmentTable { k: self.k, rows }
    }

    /// One line per word: token then `k:p` pairs, p to 6 decimals.
    pub fn save(&self, tokens: &[String], path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "#clusters {} l {}", self.k, self.l).unwrap();
        for (tok, row) in tokens.iter().zip(&self.rows) {
            out.push_str(tok);
            for (c, p) in row {
                write!(out, " {c}:{p:.6}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Keeps the `l` largest entries of each row at their original values;
/// ties at the cutoff go to the lower cluster index. Exact zeros are not
/// stored.
pub fn sparsify(assignments: &AssignmentTable, l: usize) -> Result<SparseAssignmentTable> {
    let k = assignments.k;
    if l < 1 || l > k {
        return Err(Error::Config(format!("sparsity l={l} outside 1..={k}")));
    }
    let rows = (0..assignments.n_rows())
        .map(|i| {
            let row = assignments.row(i);
            let mut order: Vec<u32> = (0..k as u32).collect();
            order.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
            let mut kept: Vec<(u32, f64)> = order[..l]
                .iter()
                .map(|&c| (c, row[c as usize]))
                .filter(|&(_, p)| p != 0.0)
                .collect();
            kept.sort_by_key(|&(c, _)| c);
            kept
        })
        .collect();
    Ok(SparseAssignmentTable { k, l, rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignmentStats {
    /// Fraction of all `V·K` entries below the threshold.
    pub fraction_below: f64,
    /// Mean over words of the per-word count of entries below threshold.
    pub mean_below: f64,
    /// Population variance of that per-word count.
    pub variance_below: f64,
}

pub fn assignment_stats(assignments: &AssignmentTable, threshold: f64) -> AssignmentStats {
    let n = assignments.n_rows();
    if n == 0 {
        return AssignmentStats {
            fraction_below: 0.0,
            mean_below: 0.0,
            variance_below: 0.0,
        };
    }
    let counts: Vec<f64> = (0..n)
        .map(|i| assignments.row(i).iter().filter(|&&p| p < threshold).count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let variance = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
    AssignmentStats {
        fraction_below: mean / assignments.k as f64,
        mean_below: mean,
        variance_below: variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(k: usize, rows: &[&[f64]]) -> AssignmentTable {
        AssignmentTable {
            k,
            rows: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[test]
    fn sparsify_keeps_top_l_unnormalized() {
        let t = table(4, &[&[0.5, 0.3, 0.15, 0.05]]);
        let s = sparsify(&t, 2).unwrap();
        assert_eq!(s.rows[0], vec![(0, 0.5), (1, 0.3)]);
    }

    #[test]
    fn sparsify_tie_goes_to_lower_index() {
        let t = table(3, &[&[0.4, 0.3, 0.3]]);
        assert_eq!(sparsify(&t, 2).unwrap().rows[0], vec![(0, 0.4), (1, 0.3)]);
        let t = table(3, &[&[0.3, 0.3, 0.4]]);
        assert_eq!(sparsify(&t, 2).unwrap().rows[0], vec![(0, 0.3), (2, 0.4)]);
    }

    #[test]
    fn sparsify_l_equal_k_is_identity() {
        let t = table(3, &[&[0.2, 0.5, 0.3], &[0.1, 0.1, 0.8]]);
        assert_eq!(sparsify(&t, 3).unwrap().to_dense(), t);
    }

    #[test]
    fn sparsify_rejects_bad_l() {
        let t = table(3, &[&[0.2, 0.5, 0.3]]);
        assert!(sparsify(&t, 0).is_err());
        assert!(sparsify(&t, 4).is_err());
    }

    #[test]
    fn stats_one_hot_and_uniform() {
        let mut rows = vec![0.0; 5 * 60];
        for i in 0..5 {
            rows[i * 60 + i] = 1.0;
        }
        let s = assignment_stats(&AssignmentTable { k: 60, rows }, 0.01);
        assert!((s.fraction_below - 59.0 / 60.0).abs() < 1e-12);
        assert_eq!(s.mean_below, 59.0);
        assert_eq!(s.variance_below, 0.0);

        let uniform = AssignmentTable {
            k: 60,
            rows: vec![1.0 / 60.0; 3 * 60],
        };
        assert_eq!(assignment_stats(&uniform, 0.01).fraction_below, 0.0);
    }

    #[test]
    fn single_component_closed_form() {
        let rows = vec![0.0, 1.0, 2.0, 0.5, 1.0, 3.0, 4.0, -1.0];
        let fit = fit_gmm(
            &rows,
            2,
            &GmmConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let m = &fit.model;
        assert!((m.mean(0)[0] - 1.75).abs() < 1e-12);
        assert!((m.mean(0)[1] - 0.875).abs() < 1e-12);
        // biased sample covariance + reg
        let xs = [0.0, 2.0, 1.0, 4.0];
        let ys = [1.0, 0.5, 3.0, -1.0];
        let cxx = xs.iter().map(|x| (x - 1.75f64).powi(2)).sum::<f64>() / 4.0 + 1e-4;
        let cxy = xs.iter().zip(&ys).map(|(x, y)| (x - 1.75) * (y - 0.875)).sum::<f64>() / 4.0;
        assert!((m.covariance(0)[(0, 0)] - cxx).abs() < 1e-12);
        assert!((m.covariance(0)[(0, 1)] - cxy).abs() < 1e-12);
        assert_eq!(posterior(m, &[10.0, 10.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn max_iter_zero_returns_initialization() {
        let rows: Vec<f64> = (0..20).map(|i| (i % 7) as f64 + 0.1 * i as f64).collect();
        let fit = fit_gmm(
            &rows,
            2,
            &GmmConfig {
                k: 2,
                max_iter: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.log_likelihood.len(), 1);
        let post = posteriors(&fit.model, &rows).unwrap();
        for i in 0..post.n_rows() {
            assert!((post.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_midpoint() {
        let cov = DMatrix::identity(2, 2);
        let m = GmmModel::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])],
            vec![cov.clone(), cov],
        )
        .unwrap();
        let p = posterior(&m, &[0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_too_few_points() {
        assert!(fit_gmm(&[0.0, 1.0], 1, &GmmConfig { k: 2, ..Default::default() }).is_err());
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let fit = fit_gmm(&rows, 3, &GmmConfig { k: 2, ..Default::default() }).unwrap();
        let path = dir.path().join("gmm.bin");
        fit.model.save(&path).unwrap();
        let back = GmmModel::load(&path).unwrap();
        assert_eq!(back.weights(), fit.model.weights());
        assert_eq!(back.covariance(1), fit.model.covariance(1));
        assert_eq!(
            posteriors(&back, &rows).unwrap(),
            posteriors(&fit.model, &rows).unwrap()
        );
    }

    fn gaussian(rng: &mut impl rand::Rng) -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn recovers_three_separated_gaussians() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let centers = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut rows = Vec::new();
        for c in &centers {
            for _ in 0..100 {
                rows.push(c[0] + 0.05 * gaussian(&mut rng));
                rows.push(c[1] + 0.05 * gaussian(&mut rng));
            }
        }
        let fit = fit_gmm(&rows, 2, &GmmConfig { k: 3, ..Default::default() }).unwrap();
        for c in &centers {
            let best = (0..3)
                .map(|j| {
                    let m = fit.model.mean(j);
                    ((m[0] - c[0]).powi(2) + (m[1] - c[1]).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "center {c:?} missed by {best}");
        }
        let sum: f64 = fit.model.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<f64> = (0..300 * 3).map(|_| gaussian(&mut rng)).collect();
        let cfg = GmmConfig { k: 4, max_iter: 60, tol: 0.0, ..Default::default() };
        let fit = fit_gmm(&rows, 3, &cfg).unwrap();
        for (i, w) in fit.log_likelihood.windows(2).enumerate() {
            if !fit.reinit_steps.contains(&(i + 1)) {
                assert!(w[1] >= w[0] - 1e-7, "step {i}: {} -> {}", w[0], w[1]);
            }
        }
    }

    /// Direct density ratio with an explicit inverse and determinant.
    fn brute_posterior(m: &GmmModel, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let d = m.dim() as f64;
        let dens: Vec<f64> = (0..m.k())
            .map(|c| {
                let cov = m.covariance(c);
                let diff = &x - m.mean(c);
                let q = (diff.transpose() * cov.clone().try_inverse().unwrap() * &diff)[(0, 0)];
                m.weights()[c] * (-0.5 * q).exp()
                    / ((2.0 * std::f64::consts::PI).powf(d) * cov.determinant()).sqrt()
            })
            .collect();
        let total: f64 = dens.iter().sum();
        dens.iter().map(|p| p / total).collect()
    }

    #[test]
    fn posteriors_match_density_ratio() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<f64> = (0..40 * 3).map(|i| gaussian(&mut rng) + (i / 30) as f64).collect();
        for k in 1..=4 {
            let fit = fit_gmm(&rows, 3, &GmmConfig { k, ..Default::default() }).unwrap();
            let post = posteriors(&fit.model, &rows).unwrap();
            for i in 0..post.n_rows() {
                let want = brute_posterior(&fit.model, &rows[i * 3..(i + 1) * 3]);
                for (a, b) in post.row(i).iter().zip(&want) {
                    assert!((a - b).abs() < 1e-9, "k={k} row {i}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn far_component_mean_gets_its_posterior() {
        let cov = DMatrix::identity(2, 2) * 0.01;
        let m = GmmModel::new(
            vec![0.3, 0.7],
            vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 1.0])],
            vec![cov.clone(), cov],
        )
        .unwrap();
        assert!(posterior(&m, &[0.0, 0.0]).unwrap()[0] > 0.99);
        assert!(posterior(&m, &[1.0, 1.0]).unwrap()[1] > 0.99);
    }

    proptest::proptest! {
        #[test]
        fn sparsify_is_idempotent_and_bounded(
            raw in proptest::collection::vec(0.0f64..1.0, 5 * 6),
            l in 1usize..=6,
        ) {
            let k = 6;
            let mut rows = raw;
            for r in rows.chunks_mut(k) {
                let s: f64 = r.iter().sum::<f64>().max(1e-12);
                r.iter_mut().for_each(|x| *x /= s);
            }
            let t = AssignmentTable { k, rows };
            let s = sparsify(&t, l).unwrap();
            proptest::prop_assert_eq!(&sparsify(&s.to_dense(), l).unwrap(), &s);
            for (i, row) in s.rows.iter().enumerate() {
                proptest::prop_assert!(row.len() <= l);
                proptest::prop_assert!(row.iter().map(|e| e.1).sum::<f64>() <= 1.0 + 1e-12);
                for &(c, p) in row {
                    proptest::prop_assert_eq!(p, t.row(i)[c as usize]);
                }
            }
        }
    }
}
