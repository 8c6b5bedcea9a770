use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::LinearConfig;
use crate::clustering::GmmConfig;
use crate::corpus::{DatasetFormat, TokenizeOptions};
use crate::embeddings::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::reduction::{AeTrainConfig, ReducerKind};
use crate::sense::SenseConfig;

/// Every tunable of a pipeline run. Loaded from a `key = value` file and
/// overridden by command-line settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    pub format: String,
    pub work_dir: PathBuf,

    pub min_count: u64,
    pub remove_stopwords: bool,
    pub stem: bool,

    pub candidates: usize,
    pub sense_window: usize,
    pub max_senses: usize,
    pub min_share: f64,
    pub merge_threshold: f64,

    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub keep_rate: f64,

    pub k: usize,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub reg_eps: f64,

    pub l_candidates: Vec<usize>,
    pub cv_folds: usize,
    pub normalize: bool,

    pub reducer: Option<ReducerKind>,
    pub reduce_dim: usize,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,

    pub classifier_reg: f64,
    pub classifier_epochs: usize,

    pub seed: u64,
    pub deterministic: bool,

    pub no_multisense: bool,
    pub no_doc2vecc: bool,
    pub doc_level_sparsity: bool,
    pub doc_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: "newsgroup-dirs".into(),
            work_dir: PathBuf::from("scdv-work"),
            min_count: 20,
            remove_stopwords: true,
            stem: false,
            candidates: 5000,
            sense_window: 5,
            max_senses: 3,
            min_share: 0.1,
            merge_threshold: 0.85,
            dim: 200,
            window: 10,
            negatives: 10,
            epochs: 10,
            learning_rate: 0.025,
            keep_rate: 0.1,
            k: 60,
            gmm_max_iter: 100,
            gmm_tol: 1e-4,
            reg_eps: 1e-4,
            l_candidates: vec![3, 5, 7],
            cv_folds: 5,
            normalize: true,
            reducer: None,
            reduce_dim: 2000,
            ae_epochs: 50,
            ae_batch_size: 64,
            ae_learning_rate: 0.001,
            classifier_reg: 1e-4,
            classifier_epochs: 20,
            seed: 1,
            deterministic: false,
            no_multisense: false,
            no_doc2vecc: false,
            doc_level_sparsity: false,
            doc_threshold: 0.04,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl PipelineConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "format" => {
                parse::<DatasetFormat>(key, v)?;
                self.format = v.to_string();
            }
            "work_dir" => self.work_dir = PathBuf::from(v),
            "min_count" => self.min_count = parse(key, v)?,
            "remove_stopwords" => self.remove_stopwords = parse_bool(key, v)?,
            "stem" => self.stem = parse_bool(key, v)?,
            "candidates" => self.candidates = parse(key, v)?,
            "sense_window" => self.sense_window = parse(key, v)?,
            "max_senses" => self.max_senses = parse(key, v)?,
            "min_share" => self.min_share = parse(key, v)?,
            "merge_threshold" => self.merge_threshold = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "negatives" => self.negatives = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "keep_rate" => self.keep_rate = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "gmm_max_iter" => self.gmm_max_iter = parse(key, v)?,
            "gmm_tol" => self.gmm_tol = parse(key, v)?,
            "reg_eps" => self.reg_eps = parse(key, v)?,
            "l" | "l_candidates" => {
                self.l_candidates = v
                    .split(',')
                    .map(|x| parse(key, x.trim()))
                    .collect::<Result<_>>()?
            }
            "cv_folds" => self.cv_folds = parse(key, v)?,
            "normalize" => self.normalize = parse_bool(key, v)?,
            "reducer" => {
                self.reducer = match v {
                    "none" | "" => None,
                    other => Some(other.parse()?),
                }
            }
            "reduce_dim" => self.reduce_dim = parse(key, v)?,
            "ae_epochs" => self.ae_epochs = parse(key, v)?,
            "ae_batch_size" => self.ae_batch_size = parse(key, v)?,
            "ae_learning_rate" => self.ae_learning_rate = parse(key, v)?,
            "classifier_reg" => self.classifier_reg = parse(key, v)?,
            "classifier_epochs" => self.classifier_epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "deterministic" => self.deterministic = parse_bool(key, v)?,
            "no_multisense" => self.no_multisense = parse_bool(key, v)?,
            "no_doc2vecc" => self.no_doc2vecc = parse_bool(key, v)?,
            "doc_level_sparsity" => self.doc_level_sparsity = parse_bool(key, v)?,
            "doc_threshold" => self.doc_threshold = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn dataset_format(&self) -> Result<DatasetFormat> {
        self.format.parse()
    }

    pub fn tokenize_options(&self) -> TokenizeOptions {
        TokenizeOptions {
            remove_stopwords: self.remove_stopwords,
            stem: self.stem,
            ..TokenizeOptions::default()
        }
    }

    pub fn sense_config(&self) -> SenseConfig {
        SenseConfig {
            window: self.sense_window,
            max_senses: self.max_senses,
            min_share: self.min_share,
            merge_threshold: self.merge_threshold,
            seed: self.seed,
            ..SenseConfig::default()
        }
    }

    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            keep_rate: self.keep_rate,
            seed: self.seed,
        }
    }

    pub fn gmm_config(&self) -> GmmConfig {
        GmmConfig {
            k: self.k,
            seed: self.seed,
            reg_eps: self.reg_eps,
            max_iter: self.gmm_max_iter,
            tol: self.gmm_tol,
            ..GmmConfig::default()
        }
    }

    pub fn ae_config(&self) -> AeTrainConfig {
        AeTrainConfig {
            learning_rate: self.ae_learning_rate,
            epochs: self.ae_epochs,
            batch_size: self.ae_batch_size,
            seed: self.seed,
            ..AeTrainConfig::default()
        }
    }

    pub fn linear_config(&self, multilabel: bool) -> LinearConfig {
        LinearConfig {
            loss: if multilabel {
                crate::classify::Loss::Logistic
            } else {
                crate::classify::Loss::Hinge
            },
            reg: self.classifier_reg,
            epochs: self.classifier_epochs,
            seed: self.seed,
        }
    }

    /// Checks every field against the preconditions of the stage that
    /// consumes it.
    pub fn validate(&self) -> Result<()> {
        self.dataset_format()?;
        if self.min_count < 1 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        self.sense_config().validate()?;
        self.embedding_config().validate()?;
        if self.k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.reg_eps > 0.0) || !(self.gmm_tol > 0.0) {
            return Err(Error::Config("reg_eps and gmm_tol must be positive".into()));
        }
        if self.l_candidates.is_empty() {
            return Err(Error::Config("l needs at least one value".into()));
        }
        if let Some(&bad) = self.l_candidates.iter().find(|&&l| l < 1 || l > self.k) {
            return Err(Error::Config(format!("l = {bad} must lie in 1..={}", self.k)));
        }
        if self.l_candidates.len() > 1 && self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be >= 2".into()));
        }
        if self.reducer.is_some() {
            if self.reduce_dim == 0 || self.reduce_dim >= self.k * self.dim {
                return Err(Error::Config(format!(
                    "reduce_dim must lie in 1..{}",
                    self.k * self.dim
                )));
            }
            if self.reducer == Some(ReducerKind::PcaSubspace) {
                crate::reduction::pca_rank_rule(self.reduce_dim, 0)?;
            }
            self.ae_config().validate()?;
        }
        self.linear_config(false).validate()?;
        if !(self.doc_threshold >= 0.0) {
            return Err(Error::Config("doc_threshold must be non-negative".into()));
        }
        Ok(())
    }

    /// Short hex digest of the full configuration.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.work_dir = PathBuf::new();
        c.deterministic = false;
        let json = serde_json::to_string(&c).expect("config serializes");
        super::manifest::digest(json.as_bytes())[..12].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_text() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# comment\nk = 10\nl = 3,5\nno_multisense = true\nreducer = pca\n\n")
            .unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.l_candidates, vec![3, 5]);
        assert!(cfg.no_multisense);
        assert_eq!(cfg.reducer, Some(ReducerKind::PcaSubspace));
    }

    #[test]
    fn bad_keys_and_values() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("k", "x").is_err());
        assert!(cfg.apply_text("k 10").is_err());
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let cfg = PipelineConfig {
            l_candidates: vec![61],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            reducer: Some(ReducerKind::PcaSubspace),
            reduce_dim: 1234,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_work_dir() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            work_dir: "elsewhere".into(),
            ..Default::default()
        };
        let c = PipelineConfig {
            no_doc2vecc: true,
            ..Default::default()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
