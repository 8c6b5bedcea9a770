//! Stage-by-stage orchestration with content-hash caching, the ablation
//! suite and the time/space report.

mod config;
mod manifest;
mod stages;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::PipelineConfig;
pub use manifest::{digest, hash_path, ArtifactRecord, RunManifest, StageRecord, MANIFEST_FILE};
pub use stages::{files, load_metrics, CompositionInputs, run_all, run_stage, Stage, StageOutcome};

/// One configuration of the ablation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Modification removed: Sparsity, Doc2VecC, MultiSense, All or None.
    pub name: String,
    pub fingerprint: String,
    pub no_multisense: bool,
    pub no_doc2vecc: bool,
    pub doc_level_sparsity: bool,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("ablation(w/o)  macro_f1  fingerprint\n");
        for r in &self.rows {
            writeln!(out, "{:<13}  {:>8.2}  {}", r.name, 100.0 * r.macro_f1, r.fingerprint).unwrap();
        }
        out
    }
}

/// The ablation configurations in report order, each derived from `base`.
pub fn ablation_configs(base: &PipelineConfig) -> Vec<(&'static str, PipelineConfig)> {
    let variant = |name: &'static str, sparsity: bool, d2v: bool, ms: bool| {
        let mut c = base.clone();
        c.doc_level_sparsity = sparsity;
        c.no_doc2vecc = d2v;
        c.no_multisense = ms;
        c.work_dir = base.work_dir.join("ablation").join(name.to_lowercase());
        (name, c)
    };
    vec![
        variant("Sparsity", true, false, false),
        variant("Doc2VecC", false, true, false),
        variant("MultiSense", false, false, true),
        variant("All", true, true, true),
        variant("None", false, false, false),
    ]
}

/// Runs the full pipeline for each ablation configuration and collects the
/// macro F1 of each.
pub fn ablation_suite(base: &PipelineConfig) -> Result<AblationReport> {
    base.validate()?;
    if base.dataset.is_none() {
        return Err(Error::Config("the ablation suite needs a dataset".into()));
    }
    let mut rows = Vec::new();
    for (name, cfg) in ablation_configs(base) {
        log::info!("ablation {name}: work dir {}", cfg.work_dir.display());
        run_all(&cfg)?;
        let metrics = load_metrics(&cfg.work_dir)?;
        rows.push(AblationRow {
            name: name.to_string(),
            fingerprint: cfg.fingerprint(),
            no_multisense: cfg.no_multisense,
            no_doc2vecc: cfg.no_doc2vecc,
            doc_level_sparsity: cfg.doc_level_sparsity,
            macro_f1: metrics.macro_f1,
        });
    }
    Ok(AblationReport { rows })
}

/// Time and space figures of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub vocab_size: usize,
    pub wtv_dim: usize,
    pub wtv_sparsity_percent: f64,
    pub dv_sparsity_percent: f64,
    pub cluster_seconds: Option<f64>,
    pub sparse_us_per_doc: f64,
    pub dense_us_per_doc: Option<f64>,
    pub wtv_bytes: usize,
}

impl ComplexityReport {
    pub fn speedup(&self) -> Option<f64> {
        self.dense_us_per_doc.map(|d| d / self.sparse_us_per_doc.max(f64::MIN_POSITIVE))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        writeln!(out, "vocab_size {}", self.vocab_size).unwrap();
        writeln!(out, "wtv_dim {}", self.wtv_dim).unwrap();
        writeln!(out, "wtv_sparsity_percent {:.3}", self.wtv_sparsity_percent).unwrap();
        writeln!(out, "dv_sparsity_percent {:.3}", self.dv_sparsity_percent).unwrap();
        writeln!(out, "cluster_seconds {}", opt(self.cluster_seconds)).unwrap();
        writeln!(out, "feature_us_per_doc_sparse {:.3}", self.sparse_us_per_doc).unwrap();
        writeln!(out, "feature_us_per_doc_dense {}", opt(self.dense_us_per_doc)).unwrap();
        writeln!(out, "feature_speedup {}", opt(self.speedup())).unwrap();
        writeln!(out, "wtv_storage_bytes {}", self.wtv_bytes).unwrap();
        out
    }
}

pub fn report_complexity(manifest: &RunManifest) -> Result<ComplexityReport> {
    let need = |stage: Stage, key: &str| {
        manifest.stat(stage.name(), key).ok_or_else(|| {
            Error::Data(format!(
                "manifest has no {key} for stage {stage}; run compose and embed-docs first"
            ))
        })
    };
    Ok(ComplexityReport {
        vocab_size: need(Stage::Compose, "vocab_size")? as usize,
        wtv_dim: need(Stage::Compose, "wtv_dim")? as usize,
        wtv_sparsity_percent: need(Stage::Compose, "wtv_sparsity_percent")?,
        wtv_bytes: need(Stage::Compose, "wtv_bytes")? as usize,
        dv_sparsity_percent: need(Stage::EmbedDocs, "dv_sparsity_percent")?,
        sparse_us_per_doc: need(Stage::EmbedDocs, "sparse_us_per_doc")?,
        dense_us_per_doc: manifest.stat(Stage::EmbedDocs.name(), "dense_us_per_doc"),
        cluster_seconds: manifest.stat(Stage::Cluster.name(), "cluster_seconds"),
    })
}

/// Loads the manifest of `work_dir` and builds its complexity report.
pub fn report_work_dir(work_dir: &Path) -> Result<ComplexityReport> {
    report_complexity(&RunManifest::load(work_dir)?)
}
