use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::PipelineConfig;
use super::manifest::{hash_path, ArtifactRecord, RunManifest, StageRecord};
use crate::classify::{self, argmax, cross_validate_l, CvResult, LinearModel, MetricsReport};
use crate::clustering::{self, AssignmentTable};
use crate::composition::{
    self, token_index, DenseOracle, DenseWordTable, DocThreshold, DocumentVectorSet,
    PreparedDoc, WordTopicTable,
};
use crate::corpus::{compute_idf, load_dataset, Corpus, IdfTable, Split};
use crate::embeddings::{self, load_vectors, save_vectors, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::reduction::{self, ReducerKind, ReducerModel};
use crate::sense::{self, AnnotatedCorpus, SenseInventory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Preprocess,
    InduceSenses,
    Annotate,
    TrainEmbeddings,
    Cluster,
    Compose,
    Reduce,
    EmbedDocs,
    TrainClassifier,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Preprocess,
        Stage::InduceSenses,
        Stage::Annotate,
        Stage::TrainEmbeddings,
        Stage::Cluster,
        Stage::Compose,
        Stage::Reduce,
        Stage::EmbedDocs,
        Stage::TrainClassifier,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::InduceSenses => "induce-senses",
            Stage::Annotate => "annotate",
            Stage::TrainEmbeddings => "train-embeddings",
            Stage::Cluster => "cluster",
            Stage::Compose => "compose",
            Stage::Reduce => "reduce",
            Stage::EmbedDocs => "embed-docs",
            Stage::TrainClassifier => "train-classifier",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Stages of a full run in order; `reduce` only with a reducer.
    pub fn plan(cfg: &PipelineConfig) -> Vec<Stage> {
        Self::ALL
            .into_iter()
            .filter(|s| *s != Stage::Reduce || cfg.reducer.is_some())
            .collect()
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Artifact file names inside the work directory.
pub mod files {
    pub const CORPUS: &str = "corpus.tsv";
    pub const LABELS: &str = "labels.txt";
    pub const VOCAB: &str = "vocab.txt";
    pub const BASE_VECTORS: &str = "base_vectors.txt";
    pub const SENSES: &str = "senses.txt";
    pub const ANNOTATED: &str = "annotated.txt";
    pub const ANNOTATED_VOCAB: &str = "annotated_vocab.txt";
    pub const VECTORS: &str = "vectors.txt";
    pub const GMM: &str = "gmm.bin";
    pub const POSTERIORS: &str = "posteriors.txt";
    pub const SPARSE: &str = "sparse_assignments.txt";
    pub const WTV: &str = "wtv.txt";
    pub const COMPOSE: &str = "compose.json";
    pub const REDUCER: &str = "reducer.bin";
    pub const RWTV: &str = "rwtv.txt";
    pub const DOCVECTORS: &str = "docvectors.txt";
    pub const TIMING: &str = "timing.json";
    pub const CLASSIFIER: &str = "classifier.json";
    pub const METRICS_TXT: &str = "metrics.txt";
    pub const METRICS_JSON: &str = "metrics.json";
}

use files::*;

fn producer(file: &str) -> Stage {
    match file {
        CORPUS | LABELS | VOCAB => Stage::Preprocess,
        BASE_VECTORS | SENSES => Stage::InduceSenses,
        ANNOTATED | ANNOTATED_VOCAB => Stage::Annotate,
        VECTORS => Stage::TrainEmbeddings,
        GMM | POSTERIORS => Stage::Cluster,
        SPARSE | WTV | COMPOSE => Stage::Compose,
        REDUCER | RWTV => Stage::Reduce,
        DOCVECTORS | TIMING => Stage::EmbedDocs,
        CLASSIFIER => Stage::TrainClassifier,
        _ => Stage::Evaluate,
    }
}

fn inputs(stage: Stage, cfg: &PipelineConfig) -> Vec<&'static str> {
    match stage {
        Stage::Preprocess => vec![],
        Stage::InduceSenses => vec![CORPUS, LABELS],
        Stage::Annotate if cfg.no_multisense => vec![CORPUS, LABELS, SENSES],
        Stage::Annotate => vec![CORPUS, LABELS, BASE_VECTORS, SENSES],
        Stage::TrainEmbeddings => vec![CORPUS, LABELS, ANNOTATED],
        Stage::Cluster => vec![VECTORS],
        Stage::Compose => vec![CORPUS, LABELS, ANNOTATED, VECTORS, POSTERIORS],
        Stage::Reduce => vec![WTV],
        Stage::EmbedDocs if cfg.reducer.is_some() => vec![CORPUS, LABELS, ANNOTATED, RWTV],
        Stage::EmbedDocs => vec![CORPUS, LABELS, ANNOTATED, VECTORS, POSTERIORS, COMPOSE, WTV],
        Stage::TrainClassifier => vec![CORPUS, LABELS, DOCVECTORS],
        Stage::Evaluate => vec![CORPUS, LABELS, DOCVECTORS, CLASSIFIER],
    }
}

fn outputs(stage: Stage, cfg: &PipelineConfig) -> Vec<&'static str> {
    match stage {
        Stage::Preprocess => vec![CORPUS, LABELS, VOCAB],
        Stage::InduceSenses if cfg.no_multisense => vec![SENSES],
        Stage::InduceSenses => vec![BASE_VECTORS, SENSES],
        Stage::Annotate => vec![ANNOTATED, ANNOTATED_VOCAB],
        Stage::TrainEmbeddings => vec![VECTORS],
        Stage::Cluster => vec![GMM, POSTERIORS],
        Stage::Compose => vec![SPARSE, WTV, COMPOSE],
        Stage::Reduce => vec![REDUCER, RWTV],
        Stage::EmbedDocs => vec![DOCVECTORS, TIMING],
        Stage::TrainClassifier => vec![CLASSIFIER],
        Stage::Evaluate => vec![METRICS_TXT, METRICS_JSON],
    }
}

/// The configuration values a stage reads, so that unrelated edits do not
/// invalidate it.
fn params(stage: Stage, c: &PipelineConfig) -> serde_json::Value {
    match stage {
        Stage::Preprocess => json!([c.format, c.min_count, c.remove_stopwords, c.stem]),
        Stage::InduceSenses => json!([
            c.no_multisense,
            c.candidates,
            c.sense_config(),
            c.embedding_config()
        ]),
        Stage::Annotate => json!([c.sense_window]),
        Stage::TrainEmbeddings => json!([c.embedding_config(), c.no_doc2vecc]),
        Stage::Cluster => json!([c.gmm_config()]),
        Stage::Compose => json!([
            c.l_candidates,
            c.cv_folds,
            c.doc_level_sparsity,
            c.normalize,
            c.linear_config(false)
        ]),
        Stage::Reduce => json!([c.reducer, c.reduce_dim, c.ae_config()]),
        Stage::EmbedDocs => json!([c.normalize, c.doc_level_sparsity, c.doc_threshold, c.reducer]),
        Stage::TrainClassifier => json!([c.linear_config(false)]),
        Stage::Evaluate => json!([]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

type Stats = BTreeMap<String, f64>;

/// Runs one stage, or skips it when its configuration, inputs and outputs
/// all match the manifest record.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    if stage == Stage::Reduce && cfg.reducer.is_none() {
        return Err(Error::Config("the reduce stage needs a reducer (set reducer = ...)".into()));
    }
    let dir = &cfg.work_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = RunManifest::load(dir)?;

    let mut input_hashes = BTreeMap::new();
    if stage == Stage::Preprocess {
        let dataset = cfg
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("preprocess needs a dataset path".into()))?;
        input_hashes.insert(dataset.display().to_string(), hash_path(dataset)?);
    }
    for name in inputs(stage, cfg) {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: producer(name).name().to_string(),
                path,
            });
        }
        input_hashes.insert(name.to_string(), hash_path(&path)?);
    }
    let params_hash = super::manifest::digest(params(stage, cfg).to_string().as_bytes());

    if let Some(prev) = manifest.stages.get(stage.name()) {
        let outputs_ok = outputs(stage, cfg).iter().all(|name| {
            prev.outputs
                .get(*name)
                .is_some_and(|rec| hash_path(&dir.join(name)).is_ok_and(|h| h == rec.hash))
        });
        if prev.params == params_hash && prev.inputs == input_hashes && outputs_ok {
            log::info!("{stage}: up to date, skipped");
            return Ok(StageOutcome::Skipped);
        }
    }

    log::info!("{stage}: running");
    let start = Instant::now();
    let stats = if cfg.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| execute(stage, cfg))?
    } else {
        execute(stage, cfg)?
    };
    let seconds = start.elapsed().as_secs_f64();

    let mut out = BTreeMap::new();
    for name in outputs(stage, cfg) {
        let path = dir.join(name);
        let bytes = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
        out.insert(
            name.to_string(),
            ArtifactRecord {
                hash: hash_path(&path)?,
                bytes,
            },
        );
    }
    manifest.stages.insert(
        stage.name().to_string(),
        StageRecord {
            params: params_hash,
            inputs: input_hashes,
            outputs: out,
            seconds,
            stats,
        },
    );
    manifest.save(dir)?;
    log::info!("{stage}: done in {seconds:.2}s");
    Ok(StageOutcome::Ran)
}

/// Runs every stage of the plan in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<(Stage, StageOutcome)>> {
    Stage::plan(cfg)
        .into_iter()
        .map(|s| run_stage(s, cfg).map(|o| (s, o)))
        .collect()
}

fn execute(stage: Stage, cfg: &PipelineConfig) -> Result<Stats> {
    let dir = cfg.work_dir.as_path();
    match stage {
        Stage::Preprocess => preprocess(cfg, dir),
        Stage::InduceSenses => induce(cfg, dir),
        Stage::Annotate => annotate(cfg, dir),
        Stage::TrainEmbeddings => train_embeddings(cfg, dir),
        Stage::Cluster => cluster(cfg, dir),
        Stage::Compose => compose(cfg, dir),
        Stage::Reduce => reduce(cfg, dir),
        Stage::EmbedDocs => embed_docs(cfg, dir),
        Stage::TrainClassifier => train_classifier(cfg, dir),
        Stage::Evaluate => evaluate(cfg, dir),
    }
}

fn stats<const N: usize>(pairs: [(&str, f64); N]) -> Stats {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    Corpus::load(&dir.join(CORPUS), &dir.join(LABELS))
}

fn load_annotated(dir: &Path, corpus: &Corpus) -> Result<Corpus> {
    Ok(sense::import_annotation(&dir.join(ANNOTATED))?
        .with_metadata(corpus)?
        .corpus)
}

fn preprocess(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let dataset_path = cfg.dataset.as_ref().expect("checked by run_stage");
    let dataset = load_dataset(dataset_path, cfg.dataset_format()?)?;
    let corpus = Corpus::from_dataset(&dataset, &cfg.tokenize_options(), cfg.min_count)?;
    corpus.save(&dir.join(CORPUS), &dir.join(LABELS))?;
    let idf = compute_idf(&corpus.vocabulary);
    corpus.vocabulary.save(&idf, &dir.join(VOCAB))?;
    let empty = corpus.documents.iter().filter(|d| d.tokens.is_empty()).count();
    if empty > 0 {
        log::warn!("{empty} documents have no in-vocabulary tokens");
    }
    Ok(stats([
        ("documents", corpus.documents.len() as f64),
        ("vocab_size", corpus.vocabulary.len() as f64),
        ("labels", corpus.n_labels() as f64),
        ("empty_documents", empty as f64),
    ]))
}

fn induce(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    if cfg.no_multisense {
        SenseInventory::default().save(&dir.join(SENSES))?;
        return Ok(stats([("multi_sense_words", 0.0)]));
    }
    let corpus = load_corpus(dir)?;
    let base = embeddings::train_sgns(&corpus, &cfg.embedding_config())?;
    save_vectors(&base, &dir.join(BASE_VECTORS))?;
    let idf = compute_idf(&corpus.vocabulary);
    let candidates = sense::select_candidates(&corpus.vocabulary, &idf, cfg.candidates);
    let inventory = sense::induce_senses(&corpus, &base, &candidates, &cfg.sense_config())?;
    inventory.save(&dir.join(SENSES))?;
    Ok(stats([
        ("candidates", candidates.len() as f64),
        ("multi_sense_words", inventory.multi_sense_words().count() as f64),
    ]))
}

fn annotate(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let corpus = load_corpus(dir)?;
    let inventory = SenseInventory::load(&dir.join(SENSES))?;
    let annotated = if inventory.multi_sense_words().next().is_none() {
        AnnotatedCorpus::identity(&corpus)
    } else {
        let base = load_vectors(&dir.join(BASE_VECTORS))?;
        let base = align_to_vocabulary(&base, &corpus)?;
        sense::annotate(&corpus, &base, &inventory, cfg.sense_window)?
    };
    annotated.export(&dir.join(ANNOTATED))?;
    let idf = compute_idf(&annotated.corpus.vocabulary);
    annotated.corpus.vocabulary.save(&idf, &dir.join(ANNOTATED_VOCAB))?;
    Ok(stats([
        ("suffixed_occurrences", annotated.suffixed_occurrences() as f64),
        ("annotated_vocab_size", annotated.corpus.vocabulary.len() as f64),
    ]))
}

/// Reorders `vectors` to the corpus vocabulary order.
fn align_to_vocabulary(vectors: &EmbeddingMatrix, corpus: &Corpus) -> Result<EmbeddingMatrix> {
    if vectors.tokens() == corpus.vocabulary.tokens() {
        return Ok(vectors.clone());
    }
    let mut data = Vec::with_capacity(corpus.vocabulary.len() * vectors.dim());
    for t in corpus.vocabulary.tokens() {
        let i = vectors
            .position(t)
            .ok_or_else(|| Error::Data(format!("no vector for vocabulary token {t:?}")))?;
        data.extend_from_slice(vectors.row(i));
    }
    EmbeddingMatrix::new(corpus.vocabulary.tokens().to_vec(), vectors.dim(), data)
}

fn train_embeddings(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let corpus = load_corpus(dir)?;
    let annotated = load_annotated(dir, &corpus)?;
    let ecfg = cfg.embedding_config();
    let vectors = if cfg.no_doc2vecc {
        embeddings::train_sgns(&annotated, &ecfg)?
    } else {
        embeddings::train_doc2vecc(&annotated, &ecfg)?
    };
    save_vectors(&vectors, &dir.join(VECTORS))?;
    Ok(stats([("words", vectors.len() as f64), ("dim", vectors.dim() as f64)]))
}

fn cluster(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let vectors = load_vectors(&dir.join(VECTORS))?;
    let start = Instant::now();
    let fit = clustering::fit_gmm(vectors.as_slice(), vectors.dim(), &cfg.gmm_config())?;
    let fit_seconds = start.elapsed().as_secs_f64();
    fit.model.save(&dir.join(GMM))?;
    let post = clustering::posteriors(&fit.model, vectors.as_slice())?;
    post.save(vectors.tokens(), &dir.join(POSTERIORS))?;
    let s = clustering::assignment_stats(&post, 0.1);
    Ok(stats([
        ("k", cfg.k as f64),
        ("iterations", fit.iterations as f64),
        ("reinitializations", fit.reinitializations as f64),
        ("log_likelihood", fit.log_likelihood.last().copied().unwrap_or(f64::NAN)),
        ("cluster_seconds", fit_seconds),
        ("fraction_below_0_1", s.fraction_below),
    ]))
}

/// idf weights aligned to `tokens`, taken from the annotated vocabulary.
fn aligned_idf(tokens: &[String], annotated: &Corpus) -> Result<IdfTable> {
    let idf = compute_idf(&annotated.vocabulary);
    let weights = tokens
        .iter()
        .map(|t| {
            annotated
                .vocabulary
                .get(t)
                .map(|i| idf.get(i))
                .ok_or_else(|| Error::Data(format!("token {t:?} is not in the annotated vocabulary")))
        })
        .collect::<Result<_>>()?;
    Ok(IdfTable { weights })
}

fn load_posteriors(dir: &Path, vectors: &EmbeddingMatrix) -> Result<AssignmentTable> {
    let (tokens, post) = AssignmentTable::load(&dir.join(POSTERIORS))?;
    if tokens != vectors.tokens() {
        return Err(Error::Data(format!(
            "{POSTERIORS} and {VECTORS} list different words; rerun the cluster stage"
        )));
    }
    Ok(post)
}

fn prepared(corpus: &Corpus, tokens: &[String], split: Option<Split>) -> Vec<PreparedDoc> {
    let index = token_index(tokens);
    corpus
        .documents
        .iter()
        .filter(|d| split.is_none_or(|s| d.split == s))
        .map(|d| PreparedDoc {
            id: d.id.clone(),
            labels: d.labels.clone(),
            tokens: composition::resolve_tokens(&index, &corpus.token_strings(d)),
        })
        .collect()
}

/// Inputs of the compose stage loaded from a work directory: the annotated
/// corpus, word vectors, their posteriors and row-aligned idf weights.
#[derive(Debug, Clone)]
pub struct CompositionInputs {
    pub corpus: Corpus,
    pub vectors: EmbeddingMatrix,
    pub posteriors: AssignmentTable,
    pub idf: IdfTable,
}

impl CompositionInputs {
    pub fn load(work_dir: &Path) -> Result<Self> {
        let corpus = load_corpus(work_dir)?;
        let corpus = load_annotated(work_dir, &corpus)?;
        let vectors = load_vectors(&work_dir.join(VECTORS))?;
        let posteriors = load_posteriors(work_dir, &vectors)?;
        let idf = aligned_idf(vectors.tokens(), &corpus)?;
        Ok(Self {
            corpus,
            vectors,
            posteriors,
            idf,
        })
    }

    /// Documents of `split` (all when `None`) resolved against the vector rows.
    pub fn prepared(&self, split: Option<Split>) -> Vec<PreparedDoc> {
        prepared(&self.corpus, self.vectors.tokens(), split)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComposeRecord {
    l: usize,
    cv: Option<CvResult>,
}

fn compose(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let CompositionInputs {
        corpus: annotated,
        vectors,
        posteriors: post,
        idf,
    } = CompositionInputs::load(dir)?;
    let k = post.k;

    let (l, cv) = if cfg.doc_level_sparsity {
        (k, None)
    } else if let [l] = cfg.l_candidates[..] {
        (l, None)
    } else {
        let train = prepared(&annotated, vectors.tokens(), Some(Split::Train));
        let labels: Vec<Vec<usize>> = train.iter().map(|d| d.labels.clone()).collect();
        let multilabel = annotated.is_multilabel();
        let result = cross_validate_l(
            &labels,
            annotated.n_labels(),
            multilabel,
            &cfg.l_candidates,
            cfg.cv_folds,
            &cfg.linear_config(multilabel),
            |l| {
                let sparse = clustering::sparsify(&post, l)?;
                let table = composition::build_table(&vectors, &sparse, &idf)?;
                Ok(composition::embed_corpus_parallel(&train, &table, cfg.normalize).vectors)
            },
        )?;
        (result.best_l, Some(result))
    };

    let sparse = clustering::sparsify(&post, l)?;
    sparse.save(vectors.tokens(), &dir.join(SPARSE))?;
    let table = composition::build_table(&vectors, &sparse, &idf)?;
    table.save(&dir.join(WTV))?;
    let record = ComposeRecord { l, cv };
    std::fs::write(dir.join(COMPOSE), serde_json::to_string_pretty(&record)?)
        .map_err(|e| Error::io(&dir.join(COMPOSE), e))?;
    Ok(stats([
        ("l", l as f64),
        ("vocab_size", table.len() as f64),
        ("wtv_dim", table.dim() as f64),
        ("wtv_sparsity_percent", table.sparsity_percent()),
        ("wtv_bytes", table.storage_bytes() as f64),
        ("wtv_max_row_nonzeros", (0..table.len()).map(|i| table.row_len(i)).max().unwrap_or(0) as f64),
    ]))
}

fn reduce(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let table = WordTopicTable::load(&dir.join(WTV))?;
    let kind = cfg.reducer.expect("checked by run_stage");
    let mut extra = Vec::new();
    let model = match kind {
        ReducerKind::RandomProjection => ReducerModel::RandomProjection(reduction::fit_random_projection(
            table.dim(),
            cfg.reduce_dim,
            cfg.seed,
        )?),
        ReducerKind::PcaSubspace => {
            ReducerModel::PcaSubspace(reduction::fit_pca_subspace(&table, cfg.reduce_dim)?)
        }
        ReducerKind::Autoencoder => {
            let fit = reduction::train_autoencoder(&table, cfg.reduce_dim, &cfg.ae_config())?;
            extra.push(("ae_initial_mse", fit.initial_mse));
            extra.push(("ae_final_mse", fit.final_mse));
            ReducerModel::Autoencoder(fit.model)
        }
    };
    model.save(&dir.join(REDUCER))?;
    let reduced = reduction::reduce_table(&model, &table)?;
    save_vectors(&reduced.to_embedding_matrix()?, &dir.join(RWTV))?;
    let mut s = stats([("in_dim", model.in_dim() as f64), ("out_dim", model.out_dim() as f64)]);
    s.extend(extra.into_iter().map(|(k, v)| (k.to_string(), v)));
    Ok(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimingRecord {
    documents: usize,
    sparse_us_per_doc: f64,
    dense_us_per_doc: Option<f64>,
    touched_entries: usize,
    unknown_tokens: usize,
    doc_threshold: Option<f64>,
}

fn embed_docs(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let corpus = load_corpus(dir)?;
    let annotated = load_annotated(dir, &corpus)?;
    let threshold_mode = cfg.doc_level_sparsity;
    let normalize_now = cfg.normalize && !threshold_mode;

    let (mut set, report, sparse_out) = if cfg.reducer.is_some() {
        let rwtv = DenseWordTable::from_embedding_matrix(&load_vectors(&dir.join(RWTV))?);
        let docs = prepared(&annotated, &rwtv.tokens, None);
        let (set, report) = composition::embed_corpus(&docs, &rwtv, normalize_now, None);
        (set, report, false)
    } else {
        let table = WordTopicTable::load(&dir.join(WTV))?;
        let vectors = load_vectors(&dir.join(VECTORS))?;
        let post = load_posteriors(dir, &vectors)?;
        let record: ComposeRecord = serde_json::from_str(
            &std::fs::read_to_string(dir.join(COMPOSE)).map_err(|e| Error::io(&dir.join(COMPOSE), e))?,
        )?;
        let sparse = clustering::sparsify(&post, record.l)?;
        let idf = aligned_idf(vectors.tokens(), &annotated)?;
        let oracle = DenseOracle::new(&vectors, &sparse, &idf);
        if table.tokens() != vectors.tokens() {
            return Err(Error::Data(format!("{WTV} and {VECTORS} list different words")));
        }
        let docs = prepared(&annotated, table.tokens(), None);
        let (set, report) = composition::embed_corpus(&docs, &table, normalize_now, Some(&oracle));
        (set, report, true)
    };

    let mut threshold = None;
    if threshold_mode {
        let train_only = DocumentVectorSet {
            dim: set.dim,
            ids: Vec::new(),
            labels: Vec::new(),
            vectors: set
                .vectors
                .iter()
                .zip(&annotated.documents)
                .filter(|(_, d)| d.split == Split::Train)
                .map(|(v, _)| v.clone())
                .collect(),
        };
        let t = DocThreshold::fit(&train_only, cfg.doc_threshold);
        t.apply(&mut set);
        if cfg.normalize {
            set.vectors.iter_mut().for_each(|v| v.normalize());
        }
        threshold = Some(t.threshold);
    }
    set.save(&dir.join(DOCVECTORS), sparse_out)?;
    let timing = TimingRecord {
        documents: report.documents,
        sparse_us_per_doc: report.sparse_us_per_doc,
        dense_us_per_doc: report.dense_us_per_doc,
        touched_entries: report.touched_entries,
        unknown_tokens: report.unknown_tokens,
        doc_threshold: threshold,
    };
    std::fs::write(dir.join(TIMING), serde_json::to_string_pretty(&timing)?)
        .map_err(|e| Error::io(&dir.join(TIMING), e))?;
    let mut s = stats([
        ("documents", set.len() as f64),
        ("dv_dim", set.dim as f64),
        ("dv_sparsity_percent", set.sparsity_percent()),
        ("sparse_us_per_doc", report.sparse_us_per_doc),
        ("touched_entries", report.touched_entries as f64),
        ("unknown_tokens", report.unknown_tokens as f64),
    ]);
    if let Some(d) = report.dense_us_per_doc {
        s.insert("dense_us_per_doc".into(), d);
    }
    if let Some(t) = threshold {
        s.insert("doc_threshold".into(), t);
    }
    Ok(s)
}

/// Document vectors with labels taken from the corpus, checked for id
/// alignment.
fn labelled_vectors(dir: &Path, corpus: &Corpus) -> Result<DocumentVectorSet> {
    let mut set = DocumentVectorSet::load(&dir.join(DOCVECTORS))?;
    if set.len() != corpus.documents.len()
        || set.ids.iter().zip(&corpus.documents).any(|(a, d)| *a != d.id)
    {
        return Err(Error::Data(format!(
            "{DOCVECTORS} does not match {CORPUS}; rerun embed-docs"
        )));
    }
    set.labels = corpus.documents.iter().map(|d| d.labels.clone()).collect();
    Ok(set)
}

fn split_indices(corpus: &Corpus, split: Split) -> Vec<usize> {
    (0..corpus.documents.len())
        .filter(|&i| corpus.documents[i].split == split)
        .collect()
}

fn train_classifier(cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let corpus = load_corpus(dir)?;
    let set = labelled_vectors(dir, &corpus)?;
    let train = split_indices(&corpus, Split::Train);
    let xs: Vec<_> = train.iter().map(|&i| set.vectors[i].clone()).collect();
    let ys: Vec<_> = train.iter().map(|&i| set.labels[i].clone()).collect();
    let multilabel = corpus.is_multilabel();
    let model = classify::train_linear(&xs, &ys, corpus.n_labels(), &cfg.linear_config(multilabel))?;
    model.save(&dir.join(CLASSIFIER))?;
    Ok(stats([
        ("train_documents", train.len() as f64),
        ("labels", model.n_labels() as f64),
    ]))
}

fn evaluate(_cfg: &PipelineConfig, dir: &Path) -> Result<Stats> {
    let corpus = load_corpus(dir)?;
    let set = labelled_vectors(dir, &corpus)?;
    let model = LinearModel::load(&dir.join(CLASSIFIER))?;
    let test = split_indices(&corpus, Split::Test);
    if test.is_empty() {
        return Err(Error::Data("no test documents to evaluate".into()));
    }
    let scores = test
        .iter()
        .map(|&i| classify::predict(&model, &set.vectors[i]))
        .collect::<Result<Vec<_>>>()?;
    let report: MetricsReport = if corpus.is_multilabel() {
        let truth: Vec<_> = test.iter().map(|&i| set.labels[i].clone()).collect();
        let ids: Vec<_> = test.iter().map(|&i| set.ids[i].clone()).collect();
        classify::evaluate_multilabel(&scores, &truth, Some(&ids))?.into()
    } else {
        let pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
        let truth: Vec<usize> = test.iter().map(|&i| set.labels[i][0]).collect();
        classify::evaluate_multiclass(&pred, &truth, corpus.n_labels())?.into()
    };
    let txt = dir.join(METRICS_TXT);
    std::fs::write(&txt, report.to_key_value()).map_err(|e| Error::io(&txt, e))?;
    let js = dir.join(METRICS_JSON);
    std::fs::write(&js, report.to_json()?).map_err(|e| Error::io(&js, e))?;
    Ok(report.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

/// Reads the metrics written by the evaluate stage.
pub fn load_metrics(work_dir: &Path) -> Result<MetricsReport> {
    let path = work_dir.join(METRICS_JSON);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: Stage::Evaluate.name().into(),
            path,
        });
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
