//! Word-vector training: skip-gram with negative sampling and a
//! corruption-averaged document-context variant that drives common words
//! toward the origin.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMethod {
    Sgns,
    Doc2VecC,
    /// Loaded from a file, provenance unknown.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Probability that a document token enters the corrupted document
    /// average. Only used by [`train_doc2vecc`].
    pub keep_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            window: 10,
            negatives: 10,
            epochs: 10,
            learning_rate: 0.025,
            keep_rate: 0.1,
            seed: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::Config(format!(
                "keep rate {} outside (0, 1]",
                self.keep_rate
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Vocabulary-aligned word vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    tokens: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    pub method: TrainingMethod,
    pub epochs: usize,
    pub seed: u64,
}

impl EmbeddingMatrix {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != tokens.len() * dim {
            return Err(Error::Dimension {
                expected: tokens.len() * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite embedding entry".into()));
        }
        Ok(Self {
            tokens,
            dim,
            data,
            method: TrainingMethod::External,
            epochs: 0,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Row index of `token`, by linear scan. Use the corpus vocabulary for
    /// repeated lookups.
    pub fn position(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }
}

/// Writes the text interchange format: a `V d` header, then one
/// `token v1 .. vd` line per row with 6 decimals.
pub fn save_vectors(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    save_rows(matrix.tokens(), matrix.dim(), matrix.as_slice(), path)
}

pub(crate) fn save_rows(tokens: &[String], dim: usize, data: &[f64], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(tokens.len() * (dim * 10 + 16));
    writeln!(out, "{} {}", tokens.len(), dim).unwrap();
    for (i, tok) in tokens.iter().enumerate() {
        if tok.is_empty() || tok.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!(
                "token {tok:?} cannot be written: empty or contains whitespace"
            )));
        }
        out.push_str(tok);
        for x in &data[i * dim..(i + 1) * dim] {
            write!(out, " {x:.6}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_vectors(path: &Path) -> Result<EmbeddingMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing `V d` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, 1, "malformed `V d` header"))?;
    let [v, d] = dims[..] else {
        return Err(Error::parse(path, 1, "malformed `V d` header"));
    };
    let mut tokens = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * d);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let tok = fields.next().unwrap();
        let before = data.len();
        for f in fields {
            let x: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {f:?}")))?;
            data.push(x);
        }
        if data.len() - before != d {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        tokens.push(tok.to_string());
    }
    if tokens.len() != v {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {v} rows, file has {}", tokens.len()),
        ));
    }
    EmbeddingMatrix::new(tokens, d, data)
}

/// Input and output tables of a negative-sampling model.
#[derive(Debug, Clone)]
pub struct SgnsModel {
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl SgnsModel {
    fn init(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let half = 0.5 / dim as f64;
        let input = (0..vocab_size * dim)
            .map(|_| rng.random_range(-half..half))
            .collect();
        Self {
            dim,
            input,
            output: vec![0.0; vocab_size * dim],
        }
    }

    /// Mean negative-sampling loss over `(center, context, negatives)`
    /// probes.
    pub fn probe_loss(&self, probes: &[(u32, u32, Vec<u32>)]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for (center, context, negatives) in probes {
            let h = &self.input[*center as usize * d..(*center as usize + 1) * d];
            let score = |w: u32| -> f64 {
                let u = &self.output[w as usize * d..(w as usize + 1) * d];
                crate::linalg::dot(h, u)
            };
            total += softplus(-score(*context));
            for &n in negatives {
                total += softplus(score(n));
            }
        }
        total / probes.len().max(1) as f64
    }

    fn into_matrix(self, tokens: Vec<String>, method: TrainingMethod, epochs: usize, seed: u64) -> Result<EmbeddingMatrix> {
        let mut m = EmbeddingMatrix::new(tokens, self.dim, self.input)?;
        m.method = method;
        m.epochs = epochs;
        m.seed = seed;
        Ok(m)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws noise words from the unigram distribution raised to 0.75.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    cumulative: Vec<f64>,
}

impl NoiseSampler {
    pub fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        let total = *self.cumulative.last().unwrap();
        let target = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.cumulative.len() - 1) as u32
    }
}

struct Trainer<'a> {
    config: &'a EmbeddingConfig,
    model: SgnsModel,
    noise: NoiseSampler,
    rng: ChaCha8Rng,
    total_words: f64,
    processed: f64,
    grad: Vec<f64>,
}

impl<'a> Trainer<'a> {
    fn new(corpus: &Corpus, config: &'a EmbeddingConfig) -> Result<Self> {
        config.validate()?;
        let n_tokens: usize = corpus.documents.iter().map(|d| d.tokens.len()).sum();
        if n_tokens == 0 {
            return Err(Error::Data("cannot train embeddings on an empty corpus".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = corpus.vocabulary.len();
        let model = SgnsModel::init(v, config.dim, &mut rng);
        let counts: Vec<u64> = (0..v as u32).map(|i| corpus.vocabulary.frequency(i)).collect();
        Ok(Self {
            config,
            model,
            noise: NoiseSampler::new(&counts),
            rng,
            total_words: (n_tokens * config.epochs) as f64,
            processed: 0.0,
            grad: vec![0.0; config.dim],
        })
    }

    fn learning_rate(&self) -> f64 {
        let frac = (self.processed / self.total_words.max(1.0)).min(1.0);
        self.config.learning_rate * (1.0 - frac).max(1e-4)
    }

    /// One negative-sampling step for hidden vector `h` against `target`.
    /// Output vectors are updated in place; the gradient w.r.t. `h` is
    /// accumulated into `self.grad`.
    fn step(&mut self, h: &[f64], target: u32, lr: f64) {
        let d = self.config.dim;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        for n in 0..=self.config.negatives {
            let (word, label) = if n == 0 {
                (target, 1.0)
            } else {
                let w = self.noise.sample(&mut self.rng);
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            let u = &mut self.model.output[word as usize * d..(word as usize + 1) * d];
            let f = crate::linalg::dot(h, u);
            let g = (label - sigmoid(f)) * lr;
            for j in 0..d {
                self.grad[j] += g * u[j];
                u[j] += g * h[j];
            }
        }
    }

    fn reduced_window(&mut self) -> usize {
        self.config.window - self.rng.random_range(0..self.config.window)
    }

    fn train_sgns(&mut self, corpus: &Corpus) {
        let d = self.config.dim;
        let mut h = vec![0.0; d];
        for _ in 0..self.config.epochs {
            for doc in &corpus.documents {
                let toks = &doc.tokens;
                for t in 0..toks.len() {
                    let lr = self.learning_rate();
                    let b = self.reduced_window();
                    let lo = t.saturating_sub(b);
                    let hi = (t + b).min(toks.len() - 1);
                    let center = toks[t] as usize;
                    for c in lo..=hi {
                        if c == t {
                            continue;
                        }
                        h.copy_from_slice(&self.model.input[center * d..(center + 1) * d]);
                        self.step(&h, toks[c], lr);
                        let row = &mut self.model.input[center * d..(center + 1) * d];
                        for j in 0..d {
                            row[j] += self.grad[j];
                        }
                    }
                    self.processed += 1.0;
                }
            }
        }
    }

    fn train_doc2vecc(&mut self, corpus: &Corpus) {
        let d = self.config.dim;
        let q = self.config.keep_rate;
        let mut h = vec![0.0; d];
        let mut context = vec![0.0; d];
        let mut doc_grad = vec![0.0; d];
        let mut kept = Vec::new();
        for _ in 0..self.config.epochs {
            for doc in &corpus.documents {
                let toks = &doc.tokens;
                if toks.is_empty() {
                    continue;
                }
                // unbiased corrupted average: each token kept w.p. q, scaled by 1/q
                corruption_sample(toks, q, &mut self.rng, &mut kept);
                let scale = 1.0 / (q * toks.len() as f64);
                context.iter_mut().for_each(|x| *x = 0.0);
                for &w in &kept {
                    let row = &self.model.input[w as usize * d..(w as usize + 1) * d];
                    crate::linalg::axpy(scale, row, &mut context);
                }
                doc_grad.iter_mut().for_each(|x| *x = 0.0);

                for t in 0..toks.len() {
                    let lr = self.learning_rate();
                    let b = self.reduced_window();
                    let lo = t.saturating_sub(b);
                    let hi = (t + b).min(toks.len() - 1);
                    let n_ctx = hi - lo;
                    if n_ctx == 0 {
                        self.processed += 1.0;
                        continue;
                    }
                    // hidden = mean of local window + corrupted document average
                    h.copy_from_slice(&context);
                    for c in (lo..=hi).filter(|&c| c != t) {
                        let row = &self.model.input[toks[c] as usize * d..(toks[c] as usize + 1) * d];
                        crate::linalg::axpy(1.0 / n_ctx as f64, row, &mut h);
                    }
                    self.step(&h, toks[t], lr);
                    for c in (lo..=hi).filter(|&c| c != t) {
                        let row = &mut self.model.input[toks[c] as usize * d..(toks[c] as usize + 1) * d];
                        crate::linalg::axpy(1.0 / n_ctx as f64, &self.grad, row);
                    }
                    crate::linalg::axpy(1.0, &self.grad, &mut doc_grad);
                    self.processed += 1.0;
                }
                for &w in &kept {
                    let row = &mut self.model.input[w as usize * d..(w as usize + 1) * d];
                    crate::linalg::axpy(scale, &doc_grad, row);
                }
            }
        }
    }
}

/// Keeps each token independently with probability `q`; every token when
/// `q >= 1`.
fn corruption_sample(toks: &[u32], q: f64, rng: &mut impl Rng, kept: &mut Vec<u32>) {
    kept.clear();
    kept.extend(toks.iter().copied().filter(|_| q >= 1.0 || rng.random::<f64>() < q));
}

/// Trains skip-gram with negative sampling and returns both tables.
pub fn fit_sgns(corpus: &Corpus, config: &EmbeddingConfig) -> Result<SgnsModel> {
    let mut trainer = Trainer::new(corpus, config)?;
    trainer.train_sgns(corpus);
    check_finite(&trainer.model)?;
    Ok(trainer.model)
}

/// Trains with the corrupted document-average context and returns both
/// tables.
pub fn fit_doc2vecc(corpus: &Corpus, config: &EmbeddingConfig) -> Result<SgnsModel> {
    let mut trainer = Trainer::new(corpus, config)?;
    trainer.train_doc2vecc(corpus);
    check_finite(&trainer.model)?;
    Ok(trainer.model)
}

fn check_finite(model: &SgnsModel) -> Result<()> {
    if model.input.iter().chain(&model.output).any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "embedding training diverged; lower the learning rate".into(),
        ));
    }
    Ok(())
}

pub fn train_sgns(corpus: &Corpus, config: &EmbeddingConfig) -> Result<EmbeddingMatrix> {
    fit_sgns(corpus, config)?.into_matrix(
        corpus.vocabulary.tokens().to_vec(),
        TrainingMethod::Sgns,
        config.epochs,
        config.seed,
    )
}

pub fn train_doc2vecc(corpus: &Corpus, config: &EmbeddingConfig) -> Result<EmbeddingMatrix> {
    fit_doc2vecc(corpus, config)?.into_matrix(
        corpus.vocabulary.tokens().to_vec(),
        TrainingMethod::Doc2VecC,
        config.epochs,
        config.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, RawDocument, Split, TokenizeOptions};
    use crate::linalg::{cosine, norm};

    /// Two disjoint 20-word topics plus, optionally, uniform background
    /// filler words.
    fn topic_corpus(background: usize, docs: usize, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let documents = (0..docs)
            .map(|n| {
                let topic = n % 2;
                let words: Vec<String> = (0..40)
                    .map(|_| {
                        if background > 0 && rng.random_bool(0.3) {
                            format!("bg{}", rng.random_range(0..background))
                        } else {
                            format!("t{topic}x{}", rng.random_range(0..20))
                        }
                    })
                    .collect();
                RawDocument {
                    id: format!("d{n}"),
                    labels: vec![topic],
                    text: words.join(" "),
                    split: Split::Train,
                }
            })
            .collect();
        let dataset = Dataset {
            documents,
            label_names: vec!["a".into(), "b".into()],
        };
        let options = TokenizeOptions {
            remove_stopwords: false,
            ..TokenizeOptions::default()
        };
        Corpus::from_dataset(&dataset, &options, 1).unwrap()
    }

    fn config(epochs: usize) -> EmbeddingConfig {
        EmbeddingConfig {
            dim: 20,
            window: 4,
            negatives: 5,
            epochs,
            ..EmbeddingConfig::default()
        }
    }

    fn topic_of(token: &str) -> Option<char> {
        token.strip_prefix('t').and_then(|r| r.chars().next())
    }

    /// Mean cosine within topics minus mean cosine across topics.
    fn separation(m: &EmbeddingMatrix) -> f64 {
        let (mut within, mut across) = ((0.0, 0), (0.0, 0));
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let (Some(a), Some(b)) = (topic_of(&m.tokens()[i]), topic_of(&m.tokens()[j])) else {
                    continue;
                };
                let c = cosine(m.row(i), m.row(j));
                let acc = if a == b { &mut within } else { &mut across };
                acc.0 += c;
                acc.1 += 1;
            }
        }
        within.0 / within.1 as f64 - across.0 / across.1 as f64
    }

    #[test]
    fn sgns_separates_disjoint_topics() {
        let m = train_sgns(&topic_corpus(0, 60, 1), &config(5)).unwrap();
        assert!(separation(&m) > 0.1, "separation {}", separation(&m));
        assert!(m.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn doc2vecc_separates_disjoint_topics() {
        let m = train_doc2vecc(&topic_corpus(0, 60, 1), &config(5)).unwrap();
        assert!(separation(&m) > 0.1, "separation {}", separation(&m));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = topic_corpus(0, 10, 2);
        let cfg = config(0);
        let m = train_sgns(&corpus, &cfg).unwrap();
        let half = 0.5 / cfg.dim as f64;
        assert!(m.as_slice().iter().all(|x| (-half..half).contains(x)));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = SgnsModel::init(corpus.vocabulary.len(), cfg.dim, &mut rng);
        assert_eq!(m.as_slice(), &init.input[..]);
        assert_eq!(train_doc2vecc(&corpus, &cfg).unwrap().as_slice(), &init.input[..]);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let corpus = topic_corpus(5, 20, 3);
        let cfg = config(2);
        assert_eq!(train_sgns(&corpus, &cfg).unwrap(), train_sgns(&corpus, &cfg).unwrap());
        assert_eq!(train_doc2vecc(&corpus, &cfg).unwrap(), train_doc2vecc(&corpus, &cfg).unwrap());
        let other = EmbeddingConfig { seed: 2, ..cfg };
        assert_ne!(train_sgns(&corpus, &cfg).unwrap(), train_sgns(&corpus, &other).unwrap());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let mut corpus = topic_corpus(0, 2, 4);
        corpus.documents.iter_mut().for_each(|d| d.tokens.clear());
        assert!(matches!(train_sgns(&corpus, &config(1)), Err(Error::Data(_))));
        assert!(matches!(train_doc2vecc(&corpus, &config(1)), Err(Error::Data(_))));
    }

    #[test]
    fn probe_loss_decreases_with_training() {
        let corpus = topic_corpus(0, 40, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let v = corpus.vocabulary.len() as u32;
        let probes: Vec<(u32, u32, Vec<u32>)> = corpus
            .documents
            .iter()
            .take(10)
            .flat_map(|d| d.tokens.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>())
            .map(|(a, b)| (a, b, (0..5).map(|_| rng.random_range(0..v)).collect()))
            .collect();
        let before = fit_sgns(&corpus, &config(0)).unwrap().probe_loss(&probes);
        let after = fit_sgns(&corpus, &config(5)).unwrap().probe_loss(&probes);
        assert!((before - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn doc2vecc_shrinks_background_words() {
        let corpus = topic_corpus(5, 200, 6);
        let cfg = config(10);
        let mean_bg_norm = |m: &EmbeddingMatrix| {
            let rows: Vec<f64> = (0..m.len())
                .filter(|&i| m.tokens()[i].starts_with("bg"))
                .map(|i| norm(m.row(i)))
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        };
        let sgns = mean_bg_norm(&train_sgns(&corpus, &cfg).unwrap());
        let d2v = mean_bg_norm(&train_doc2vecc(&corpus, &cfg).unwrap());
        assert!(d2v <= 0.5 * sgns, "doc2vecc {d2v} vs sgns {sgns}");
    }

    #[test]
    fn keep_rate_one_keeps_every_token() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let toks = [3, 1, 4, 1, 5];
        let mut kept = Vec::new();
        corruption_sample(&toks, 1.0, &mut rng, &mut kept);
        assert_eq!(kept, toks);
        corruption_sample(&toks, 0.5, &mut rng, &mut kept);
        assert!(kept.len() <= toks.len());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let corpus = topic_corpus(0, 4, 7);
        for bad in [
            EmbeddingConfig { dim: 0, ..config(1) },
            EmbeddingConfig { window: 0, ..config(1) },
            EmbeddingConfig { keep_rate: 0.0, ..config(1) },
            EmbeddingConfig { keep_rate: 1.5, ..config(1) },
        ] {
            assert!(matches!(train_doc2vecc(&corpus, &bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn vectors_roundtrip_to_six_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let m = train_sgns(&topic_corpus(0, 10, 8), &config(1)).unwrap();
        let path = dir.path().join("v.txt");
        save_vectors(&m, &path).unwrap();
        let back = load_vectors(&path).unwrap();
        assert_eq!(back.tokens(), m.tokens());
        assert_eq!(back.dim(), m.dim());
        let worst = m
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 5e-7);
    }

    #[test]
    fn short_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let row = |t: &str| format!("{t}{}\n", " 0.5".repeat(200));
        std::fs::write(&path, format!("3 200\n{}{}", row("a"), row("b"))).unwrap();
        assert!(matches!(load_vectors(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "2 3\na 1 2 3\nb 1 2\n").unwrap();
        assert!(matches!(load_vectors(&path), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn token_with_space_is_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let m = EmbeddingMatrix::new(vec!["a b".into()], 1, vec![0.0]).unwrap();
        assert!(matches!(save_vectors(&m, &dir.path().join("v.txt")), Err(Error::Data(_))));
    }
}
