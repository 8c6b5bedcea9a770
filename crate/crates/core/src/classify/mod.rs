//! One-vs-rest linear classifiers, evaluation metrics and cross-validated
//! choice of the sparsity constant.

mod cv;
mod metrics;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::DocVector;
use crate::error::{Error, Result};

pub use cv::{cross_validate_l, stratified_folds, CvResult, CvScore};
pub use metrics::{
    evaluate_multiclass, evaluate_multilabel, rank_labels, MetricsReport, MulticlassMetrics,
    MultilabelMetrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Hinge,
    Logistic,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(Self::Hinge),
            "logistic" => Ok(Self::Logistic),
            _ => Err(Error::Config(format!("unknown loss {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub loss: Loss,
    /// L2 regularization strength λ.
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Hinge,
            reg: 1e-4,
            epochs: 20,
            seed: 1,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg > 0.0 && self.reg.is_finite()) {
            return Err(Error::Config(format!("reg must be positive, got {}", self.reg)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// One weight vector and bias per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub loss: Loss,
    pub reg: f64,
    pub dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearModel {
    pub fn n_labels(&self) -> usize {
        self.biases.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.weights.len() != model.biases.len()
            || model.weights.iter().any(|w| w.len() != model.dim)
        {
            return Err(Error::parse(path, 0, "inconsistent linear model shapes"));
        }
        Ok(model)
    }
}

/// Per-label scores `w·x + b`.
pub fn predict(model: &LinearModel, vector: &DocVector) -> Result<Vec<f64>> {
    if vector.dim() != model.dim {
        return Err(Error::Dimension {
            expected: model.dim,
            found: vector.dim(),
        });
    }
    let entries = vector.nonzero_entries();
    Ok(model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| b + entries.iter().map(|&(i, x)| w[i] * x).sum::<f64>())
        .collect())
}

/// Index of the highest score; ties go to the lower index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

struct Example {
    entries: Vec<(u32, f64)>,
    labels: Vec<usize>,
    weight: f64,
}

/// Collapses identical `(vector, labels)` pairs into one weighted example,
/// keeping first-occurrence order. Weights are normalized to mean 1.
fn dedup(vectors: &[DocVector], labels: &[Vec<usize>]) -> Vec<Example> {
    let mut seen: HashMap<(Vec<(u32, u64)>, Vec<usize>), usize> = HashMap::new();
    let mut out: Vec<Example> = Vec::new();
    for (v, l) in vectors.iter().zip(labels) {
        let entries: Vec<(u32, f64)> = v.nonzero_entries().into_iter().map(|(i, x)| (i as u32, x)).collect();
        let mut lab = l.clone();
        lab.sort_unstable();
        lab.dedup();
        let key = (entries.iter().map(|&(i, x)| (i, x.to_bits())).collect(), lab.clone());
        match seen.get(&key) {
            Some(&p) => out[p].weight += 1.0,
            None => {
                seen.insert(key, out.len());
                out.push(Example {
                    entries,
                    labels: lab,
                    weight: 1.0,
                });
            }
        }
    }
    let mean = vectors.len() as f64 / out.len().max(1) as f64;
    for e in &mut out {
        e.weight /= mean;
    }
    out
}

/// Trains one binary classifier per label by averaged stochastic
/// (sub)gradient descent on the L2-regularized loss.
///
/// Duplicate training examples are merged into weighted examples, so a
/// training set repeated `m` times yields the same model.
pub fn train_linear(
    vectors: &[DocVector],
    labels: &[Vec<usize>],
    n_labels: usize,
    config: &LinearConfig,
) -> Result<LinearModel> {
    config.validate()?;
    if vectors.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} vectors but {} label sets",
            vectors.len(),
            labels.len()
        )));
    }
    if vectors.is_empty() {
        return Err(Error::Data("no training documents".into()));
    }
    if n_labels < 2 {
        return Err(Error::Data("classification needs at least two labels".into()));
    }
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.dim(),
            });
        }
        if v.nonzero_entries().iter().any(|(_, x)| !x.is_finite()) {
            return Err(Error::Numeric("training vector has non-finite entries".into()));
        }
    }
    if let Some(bad) = labels.iter().flatten().find(|&&l| l >= n_labels) {
        return Err(Error::Data(format!("label {bad} out of range for {n_labels} labels")));
    }
    let examples = dedup(vectors, labels);
    let fitted: Vec<(Vec<f64>, f64)> = (0..n_labels)
        .into_par_iter()
        .map(|label| train_binary(&examples, label, dim, config))
        .collect();
    let (weights, biases) = fitted.into_iter().unzip();
    Ok(LinearModel {
        loss: config.loss,
        reg: config.reg,
        dim,
        weights,
        biases,
    })
}

/// Weight vector kept as `a · u`, with the running sum of iterates kept as
/// `z + c · u` so sparse steps cost O(nnz).
struct Averaged {
    u: Vec<f64>,
    a: f64,
    z: Vec<f64>,
    c: f64,
    b: f64,
    b_sum: f64,
    steps: usize,
}

impl Averaged {
    fn margin(&self, x: &[(u32, f64)]) -> f64 {
        self.a * x.iter().map(|&(i, v)| self.u[i as usize] * v).sum::<f64>() + self.b
    }

    fn shrink(&mut self, factor: f64) {
        self.a *= factor;
        if self.a < 1e-9 {
            for (z, u) in self.z.iter_mut().zip(&mut self.u) {
                *z += self.c * *u;
                *u *= self.a;
            }
            self.c = 0.0;
            self.a = 1.0;
        }
    }

    fn add(&mut self, x: &[(u32, f64)], step: f64) {
        let s = step / self.a;
        for &(i, v) in x {
            let delta = s * v;
            self.u[i as usize] += delta;
            self.z[i as usize] -= self.c * delta;
        }
    }

    fn accumulate(&mut self) {
        self.c += self.a;
        self.b_sum += self.b;
        self.steps += 1;
    }

    fn average(&self) -> (Vec<f64>, f64) {
        let n = self.steps.max(1) as f64;
        let w = self.z.iter().zip(&self.u).map(|(z, u)| (z + self.c * u) / n).collect();
        (w, self.b_sum / n)
    }
}

fn train_binary(examples: &[Example], label: usize, dim: usize, cfg: &LinearConfig) -> (Vec<f64>, f64) {
    let lambda = cfg.reg;
    let t0 = (1.0 / lambda).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (label as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut state = Averaged {
        u: vec![0.0; dim],
        a: 1.0,
        z: vec![0.0; dim],
        c: 0.0,
        b: 0.0,
        b_sum: 0.0,
        steps: 0,
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let average_from = usize::from(cfg.epochs > 1);
    let mut t = 0.0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let ex = &examples[i];
            t += 1.0;
            let eta = 1.0 / (lambda * (t + t0));
            let y = if ex.labels.contains(&label) { 1.0 } else { -1.0 };
            let m = state.margin(&ex.entries);
            let g = match cfg.loss {
                Loss::Hinge => {
                    if y * m < 1.0 {
                        -y
                    } else {
                        0.0
                    }
                }
                Loss::Logistic => -y / (1.0 + (y * m).exp()),
            } * ex.weight;
            state.shrink(1.0 - eta * lambda);
            if g != 0.0 {
                state.add(&ex.entries, -eta * g);
                state.b -= eta * g;
            }
            if epoch >= average_from {
                state.accumulate();
            }
        }
    }
    state.average()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(v: &[f64]) -> DocVector {
        DocVector::Dense(v.to_vec())
    }

    fn separable() -> (Vec<DocVector>, Vec<Vec<usize>>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            xs.push(dense(&[1.0 + t, 0.5 - t]));
            ys.push(vec![0]);
            xs.push(dense(&[-1.0 - t, 0.3 + t]));
            ys.push(vec![1]);
        }
        (xs, ys)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (xs, ys) = separable();
        let model = train_linear(&xs, &ys, 2, &LinearConfig::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(argmax(&predict(&model, x).unwrap()), y[0]);
        }
    }

    #[test]
    fn heavy_regularization_shrinks_weights() {
        let (xs, ys) = separable();
        let cfg = LinearConfig {
            reg: 1e6,
            ..Default::default()
        };
        let model = train_linear(&xs, &ys, 2, &cfg).unwrap();
        for w in &model.weights {
            assert!(crate::linalg::norm(w) < 1e-2);
        }
    }

    #[test]
    fn duplicated_training_set_gives_identical_model() {
        let (xs, ys) = separable();
        let cfg = LinearConfig {
            loss: Loss::Logistic,
            ..Default::default()
        };
        let a = train_linear(&xs, &ys, 2, &cfg).unwrap();
        let xs2: Vec<_> = xs.iter().chain(&xs).cloned().collect();
        let ys2: Vec<_> = ys.iter().chain(&ys).cloned().collect();
        let b = train_linear(&xs2, &ys2, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_label_is_rejected() {
        let (xs, _) = separable();
        let ys = vec![vec![0]; xs.len()];
        assert!(train_linear(&xs, &ys, 1, &LinearConfig::default()).is_err());
    }

    #[test]
    fn zero_model_scores_are_biases() {
        let model = LinearModel {
            loss: Loss::Hinge,
            reg: 1.0,
            dim: 3,
            weights: vec![vec![0.0; 3]; 2],
            biases: vec![0.5, -1.0],
        };
        assert_eq!(predict(&model, &dense(&[1.0, 2.0, 3.0])).unwrap(), vec![0.5, -1.0]);
        assert!(predict(&model, &dense(&[1.0])).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[2.0, 1.0, 3.0]), 2);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn model_file_roundtrip() {
        let (xs, ys) = separable();
        let model = train_linear(&xs, &ys, 2, &LinearConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save(&p).unwrap();
        assert_eq!(LinearModel::load(&p).unwrap(), model);
    }
}
