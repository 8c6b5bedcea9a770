use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scdv::pipeline::{self, PipelineConfig, Stage, StageOutcome};
use scdv::synth::{self, SynthConfig};
use scdv::{Error, Result};

/// Sparse composite document vectors: staged pipeline driver.
#[derive(Debug, Parser)]
#[command(name = "scdv", version)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, short = 'c', global = true)]
    config: Option<PathBuf>,

    /// Directory holding the artifacts and the run manifest.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,

    /// Input dataset (directory tree or TSV file).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Dataset layout: newsgroup-dirs or multilabel-tsv.
    #[arg(long, global = true)]
    format: Option<String>,

    /// Override any configuration key, e.g. `--set k=60`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Single-threaded numeric paths for byte-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Disable sense annotation.
    #[arg(long, global = true)]
    no_multisense: bool,

    /// Train word vectors with plain skip-gram instead of Doc2VecC.
    #[arg(long, global = true)]
    no_doc2vecc: bool,

    /// Threshold document vectors instead of sparsifying word-cluster
    /// assignments.
    #[arg(long, global = true)]
    doc_level_sparsity: bool,

    /// Print debug logging.
    #[arg(long, short = 'v', global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize the dataset and build the vocabulary.
    Preprocess,
    /// Fit the sense inventory from context clusters.
    InduceSenses,
    /// Rewrite multi-sense occurrences as `word#k`.
    Annotate,
    /// Train word vectors on the annotated corpus.
    TrainEmbeddings,
    /// Fit the mixture model and word-cluster posteriors.
    Cluster,
    /// Choose l, sparsify posteriors and build word-topic vectors.
    Compose,
    /// Project word-topic vectors to a lower dimension.
    Reduce,
    /// Compose document vectors.
    EmbedDocs,
    /// Train the one-vs-rest classifier on the train split.
    TrainClassifier,
    /// Score the test split and write metrics.
    Evaluate,
    /// Run every stage in order, skipping up-to-date ones.
    Run,
    /// Run the five ablation configurations and print their F1 table.
    Ablate {
        /// Also write the table as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print time and space figures of a finished run.
    Report {
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
    },
    /// Write the synthetic 3-topic corpus as class directories.
    SynthCorpus {
        /// Output directory (gets train/ and test/).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn build_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for o in &c.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(p) = &c.work_dir {
        cfg.work_dir = p.clone();
    }
    if let Some(p) = &c.dataset {
        cfg.dataset = Some(p.clone());
    }
    if let Some(f) = &c.format {
        cfg.set("format", f)?;
    }
    cfg.deterministic |= c.deterministic;
    cfg.no_multisense |= c.no_multisense;
    cfg.no_doc2vecc |= c.no_doc2vecc;
    cfg.doc_level_sparsity |= c.doc_level_sparsity;
    Ok(cfg)
}

fn print_outcome(stage: Stage, outcome: StageOutcome) {
    let what = match outcome {
        StageOutcome::Ran => "done",
        StageOutcome::Skipped => "skipped (up to date)",
    };
    println!("{stage}: {what}");
}

fn stage_of(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::Preprocess => Stage::Preprocess,
        Command::InduceSenses => Stage::InduceSenses,
        Command::Annotate => Stage::Annotate,
        Command::TrainEmbeddings => Stage::TrainEmbeddings,
        Command::Cluster => Stage::Cluster,
        Command::Compose => Stage::Compose,
        Command::Reduce => Stage::Reduce,
        Command::EmbedDocs => Stage::EmbedDocs,
        Command::TrainClassifier => Stage::TrainClassifier,
        Command::Evaluate => Stage::Evaluate,
        _ => return None,
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Command::SynthCorpus { out, docs, seed } = &cli.command {
        let mut sc = SynthConfig::default();
        if let Some(n) = docs {
            sc.n_docs = *n;
        }
        if let Some(s) = seed {
            sc.seed = *s;
        }
        let ds = synth::generate(&sc)?;
        synth::write_newsgroup_dirs(&ds, out)?;
        println!("wrote {} documents to {}", ds.documents.len(), out.display());
        return Ok(());
    }
    let cfg = build_config(&cli.common)?;
    if let Some(stage) = stage_of(&cli.command) {
        let outcome = pipeline::run_stage(stage, &cfg)?;
        print_outcome(stage, outcome);
        if stage == Stage::Evaluate {
            print!("{}", pipeline::load_metrics(&cfg.work_dir)?.to_key_value());
        }
        return Ok(());
    }
    match cli.command {
        Command::Run => {
            for (stage, outcome) in pipeline::run_all(&cfg)? {
                print_outcome(stage, outcome);
            }
            print!("{}", pipeline::load_metrics(&cfg.work_dir)?.to_key_value());
        }
        Command::Ablate { json } => {
            let report = pipeline::ablation_suite(&cfg)?;
            print!("{}", report.to_table());
            if let Some(p) = json {
                let text = serde_json_string(&report)?;
                std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            }
        }
        Command::Report { json } => {
            let report = pipeline::report_work_dir(&cfg.work_dir)?;
            if json {
                println!("{}", serde_json_string(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.common.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
