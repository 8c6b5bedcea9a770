use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::binio::{Reader, Writer};
use crate::error::{Error, Result};

/// Sparse sign projection: each entry of the `in_dim × out_dim` matrix is
/// `+s` with probability 1/6, `-s` with probability 1/6 and 0 otherwise,
/// where `s = √(3/out_dim)`. Regenerated from the seed on load.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    pub in_dim: usize,
    pub out_dim: usize,
    pub seed: u64,
    scale: f64,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    negative: Vec<bool>,
}

pub fn fit_random_projection(in_dim: usize, out_dim: usize, seed: u64) -> Result<RandomProjection> {
    if out_dim == 0 || out_dim >= in_dim {
        return Err(Error::Config(format!(
            "random projection needs 0 < out_dim < in_dim (got {out_dim} and {in_dim})"
        )));
    }
    Ok(RandomProjection::generate(in_dim, out_dim, seed))
}

impl RandomProjection {
    fn generate(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offsets = Vec::with_capacity(in_dim + 1);
        let mut cols = Vec::with_capacity(in_dim * out_dim / 3 + 16);
        let mut negative = Vec::with_capacity(cols.capacity());
        offsets.push(0);
        for _ in 0..in_dim {
            for j in 0..out_dim {
                match rng.random_range(0..6u8) {
                    0 => {
                        cols.push(j as u32);
                        negative.push(false);
                    }
                    1 => {
                        cols.push(j as u32);
                        negative.push(true);
                    }
                    _ => {}
                }
            }
            offsets.push(cols.len());
        }
        Self {
            in_dim,
            out_dim,
            seed,
            scale: (3.0 / out_dim as f64).sqrt(),
            offsets,
            cols,
            negative,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Entry `(i, j)` of the projection matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        match self.cols[a..b].binary_search(&(j as u32)) {
            Ok(p) if self.negative[a + p] => -self.scale,
            Ok(_) => self.scale,
            Err(_) => 0.0,
        }
    }

    /// Counts of (+s, 0, -s) entries.
    pub fn entry_counts(&self) -> (usize, usize, usize) {
        let neg = self.negative.iter().filter(|n| **n).count();
        let pos = self.negative.len() - neg;
        (pos, self.in_dim * self.out_dim - pos - neg, neg)
    }

    pub fn encode_sparse(&self, indices: &[u32], values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        for (&i, &x) in indices.iter().zip(values) {
            let (a, b) = (self.offsets[i as usize], self.offsets[i as usize + 1]);
            let v = x * self.scale;
            for (&j, &neg) in self.cols[a..b].iter().zip(&self.negative[a..b]) {
                if neg {
                    out[j as usize] -= v;
                } else {
                    out[j as usize] += v;
                }
            }
        }
        out
    }

    pub(super) fn write(&self, w: &mut Writer) {
        w.u64(self.in_dim as u64);
        w.u64(self.out_dim as u64);
        w.u64(self.seed);
    }

    pub(super) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let (in_dim, out_dim, seed) = (r.usize()?, r.usize()?, r.u64()?);
        fit_random_projection(in_dim, out_dim, seed)
    }
}
