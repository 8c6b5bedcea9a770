use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binio::{Reader, Writer};
use crate::composition::WordTopicTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeTrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 50,
            batch_size: 64,
            seed: 1,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

const ADAM_EPS: f64 = 1e-8;

/// Width of the two outer hidden layers for a given code size.
pub fn hidden_size(out_dim: usize) -> usize {
    2 * out_dim
}

/// Fully connected `in → h → out → h → in` network. Hidden layers use tanh,
/// the reconstruction layer is linear. Samples are matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1`, shape `sizes[l+1] × sizes[l]`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Gradients in the same layout as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Autoencoder {
    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect();
        let biases = sizes[1..].iter().map(|&n| DVector::zeros(n)).collect();
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes);
        for w in &mut net.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
        }
        net
    }

    pub fn for_dims(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let h = hidden_size(out_dim);
        Self::glorot(&[in_dim, h, out_dim, h, in_dim], rng)
    }

    pub fn code_dim(&self) -> usize {
        self.sizes[self.sizes.len() / 2]
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn is_linear(&self, layer: usize) -> bool {
        layer + 1 == self.n_layers()
    }

    fn layer(&self, l: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights[l] * a;
        for mut col in z.column_iter_mut() {
            col += &self.biases[l];
        }
        if !self.is_linear(l) {
            z.apply(|x| *x = x.tanh());
        }
        z
    }

    /// Activations of every layer, input first.
    pub fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        for l in 0..self.n_layers() {
            let next = self.layer(l, acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Codes for the columns of `x`.
    pub fn encode_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = self.layer(0, x);
        for l in 1..self.n_layers() / 2 {
            a = self.layer(l, &a);
        }
        a
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let col = DMatrix::from_column_slice(x.len(), 1, x);
        self.encode_batch(&col).as_slice().to_vec()
    }

    pub(super) fn encode_table(&self, table: &WordTopicTable) -> Vec<f64> {
        let mut out = Vec::with_capacity(table.len() * self.code_dim());
        let rows: Vec<usize> = (0..table.len()).collect();
        for chunk in rows.chunks(256) {
            let x = batch_matrix(table, chunk);
            out.extend_from_slice(self.encode_batch(&x).as_slice());
        }
        out
    }

    /// Mean squared reconstruction error over all entries of `x`.
    pub fn mse(&self, x: &DMatrix<f64>) -> f64 {
        let recon = self.forward(x).pop().unwrap();
        (recon - x).norm_squared() / x.len().max(1) as f64
    }

    /// Loss and its gradient for the batch `x`.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>) -> (f64, Gradients) {
        let acts = self.forward(x);
        let n = x.len().max(1) as f64;
        let diff = acts.last().unwrap() - x;
        let loss = diff.norm_squared() / n;
        let mut delta = diff * (2.0 / n);
        let mut weights = Vec::with_capacity(self.n_layers());
        let mut biases = Vec::with_capacity(self.n_layers());
        for l in (0..self.n_layers()).rev() {
            if !self.is_linear(l) {
                delta.zip_apply(&acts[l + 1], |d, a| *d *= 1.0 - a * a);
            }
            weights.push(&delta * acts[l].transpose());
            biases.push(delta.column_sum());
            if l > 0 {
                delta = self.weights[l].transpose() * &delta;
            }
        }
        weights.reverse();
        biases.reverse();
        (loss, Gradients { weights, biases })
    }

    /// Parameters flattened in layer order, weights column-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&p[pos..pos + n]);
            pos += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&p[pos..pos + n]);
            pos += n;
        }
    }

    pub(super) fn write(&self, w: &mut Writer) {
        w.u64(self.sizes.len() as u64);
        for &s in &self.sizes {
            w.u64(s as u64);
        }
        for (wm, b) in self.weights.iter().zip(&self.biases) {
            w.f64s(wm.as_slice());
            w.f64s(b.as_slice());
        }
    }

    pub(super) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.usize()?;
        let sizes = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if sizes.len() < 3 || sizes.first() != sizes.last() {
            return Err(Error::Data("autoencoder layer sizes are not mirrored".into()));
        }
        let mut net = Self::zeros(&sizes);
        for (wm, b) in net.weights.iter_mut().zip(&mut net.biases) {
            let flat = r.f64s(wm.len())?;
            wm.as_mut_slice().copy_from_slice(&flat);
            let flat = r.f64s(b.len())?;
            b.as_mut_slice().copy_from_slice(&flat);
        }
        Ok(net)
    }
}

impl Gradients {
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.flatten()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &AeTrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

fn batch_matrix(table: &WordTopicTable, rows: &[usize]) -> DMatrix<f64> {
    let dim = table.dim();
    let mut x = DMatrix::zeros(dim, rows.len());
    for (c, &i) in rows.iter().enumerate() {
        for (j, v) in table.row_entries(i) {
            x[(j as usize, c)] = v;
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct AeFit {
    pub model: Autoencoder,
    /// Reconstruction MSE over the whole table before training.
    pub initial_mse: f64,
    /// Mean batch MSE per epoch.
    pub epoch_mse: Vec<f64>,
    /// Reconstruction MSE over the whole table after training.
    pub final_mse: f64,
}

fn table_mse(net: &Autoencoder, table: &WordTopicTable) -> f64 {
    let rows: Vec<usize> = (0..table.len()).collect();
    let mut total = 0.0;
    for chunk in rows.chunks(256) {
        let x = batch_matrix(table, chunk);
        total += net.mse(&x) * x.len() as f64;
    }
    total / (table.len() * table.dim()).max(1) as f64
}

/// Trains the autoencoder on the rows of the word-topic table with Adam on
/// mean squared reconstruction error. Deterministic given the seed.
pub fn train_autoencoder(table: &WordTopicTable, out_dim: usize, cfg: &AeTrainConfig) -> Result<AeFit> {
    cfg.validate()?;
    let in_dim = table.dim();
    if out_dim == 0 || out_dim >= in_dim {
        return Err(Error::Config(format!(
            "autoencoder needs 0 < out_dim < in_dim (got {out_dim} and {in_dim})"
        )));
    }
    if table.is_empty() {
        return Err(Error::Data("autoencoder needs a non-empty table".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Autoencoder::for_dims(in_dim, out_dim, &mut rng);
    let initial_mse = table_mse(&net, table);
    let mut params = net.parameters();
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..table.len()).collect();
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_matrix(table, chunk);
            let (loss, grads) = net.loss_and_gradients(&x);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "autoencoder diverged in epoch {epoch} (MSE {loss}); lower the learning rate"
                )));
            }
            sum += loss * chunk.len() as f64;
            adam.step(&mut params, &grads.flatten(), cfg);
            net.set_parameters(&params);
        }
        let mse = sum / table.len() as f64;
        log::debug!("autoencoder epoch {epoch}: mse {mse:.6e}");
        epoch_mse.push(mse);
    }
    let final_mse = table_mse(&net, table);
    if !final_mse.is_finite() {
        return Err(Error::Numeric(
            "autoencoder diverged (MSE is not finite); lower the learning rate".into(),
        ));
    }
    Ok(AeFit {
        model: net,
        initial_mse,
        epoch_mse,
        final_mse,
    })
}
