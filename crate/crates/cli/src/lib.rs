//! Command-line driver for the annotation error pipeline.
//!
//! Every subcommand writes a directory of artifacts plus a `manifest.json`
//! listing their checksums, the config hash and the seeds used.

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod stages;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
use crate::manifest::{Bundle, Status};
use crate::stages::{FeatureSet, Provenance, Scope};

#[derive(Debug, Parser)]
#[command(name = "auditlens", version, about = "Annotation error detection and audit prioritization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotation log with hidden truth.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Build the feature matrix and the train/test split.
    Featurize {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        annotators: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit imputation, scaling and one-hot statistics on the training rows.
    Preprocess {
        #[arg(long)]
        features: PathBuf,
        /// Application name, or `task_agnostic` for all rows.
        #[arg(long, default_value = "task_agnostic")]
        scope: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Randomized hyperparameter search on the training rows.
    Tune {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "task_agnostic")]
        scope: String,
        /// Search seed; defaults to the config's `search.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit the final model with the best searched hyperparameters.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// `search.json` written by `tune`.
        #[arg(long)]
        search: PathBuf,
        #[arg(long, default_value = "task_agnostic")]
        scope: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate a model on a test set.
    Evaluate {
        #[command(flatten)]
        target: ModelTarget,
    },
    /// TreeSHAP attributions and importance for a model on a test set.
    Explain {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        target: ModelTarget,
        /// Rows explained; defaults to the config's `shap_max_rows`.
        #[arg(long)]
        max_rows: Option<usize>,
    },
    /// Flip-rate and coverage curves for model-ranked audits.
    AuditSim {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        target: ModelTarget,
    },
    /// Run every stage for every model and write the full report.
    Experiment {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides the config's `output_dir`.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Suppress progress messages.
        #[arg(long, short)]
        quiet: bool,
    },
}

#[derive(Debug, Args)]
struct ModelTarget {
    /// `model.json` written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Test set: an application or `combined`; defaults to the model's own.
    #[arg(long)]
    test_set: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

impl ModelTarget {
    fn load(&self) -> CliResult<(stages::Stamped<stages::ModelArtifact>, String, auditlens_core::featurize::FeatureMatrix)> {
        let model = stages::load_model(&self.model)?;
        let scope = Scope::parse(self.test_set.as_deref().unwrap_or(&model.body.name))?;
        let features = FeatureSet::load(&self.features)?;
        let test = features.test(scope)?;
        Ok((model, scope.test_set_name().to_string(), test))
    }
}

fn load_config(arg: &ConfigArg) -> CliResult<ExperimentConfig> {
    ExperimentConfig::load_or_default(arg.config.as_deref())
}

fn provenance(config: &ExperimentConfig, explicit: bool) -> Provenance {
    Provenance { config_hash: explicit.then(|| config.hash()), ..Default::default() }
}

/// Runs `body` against a fresh bundle and writes the manifest either way.
fn with_bundle<F>(out: &Path, command: &str, config_hash: Option<String>, body: F) -> CliResult<()>
where
    F: FnOnce(&mut Bundle) -> CliResult<()>,
{
    let mut bundle = Bundle::create(out, command)?;
    if let Some(h) = config_hash {
        bundle.set_config_hash(h);
    }
    match body(&mut bundle) {
        Ok(()) => bundle.finish(Status::Complete, None),
        Err(e) => {
            let stage = match &e {
                CliError::Stage { stage, .. } => *stage,
                _ => command_stage(command),
            };
            bundle.finish(Status::Incomplete, Some(stage))?;
            Err(e)
        }
    }
}

fn command_stage(command: &str) -> &'static str {
    match command {
        "generate" => "generate",
        "featurize" => "featurize",
        "preprocess" => "preprocess",
        "tune" => "tune",
        "train" => "train",
        "evaluate" => "evaluate",
        "explain" => "explain",
        "audit-sim" => "audit-sim",
        _ => "experiment",
    }
}

fn seed_bundle(bundle: &mut Bundle, prov: &Provenance) {
    for (name, &seed) in &prov.seeds {
        bundle.seed(name, seed);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = load_config(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let prov = provenance(&cfg, config.config.is_some());
            with_bundle(&out, "generate", prov.config_hash.clone(), |b| {
                b.seed("generator", cfg.generator.seed);
                stages::generate(b, "", &cfg.generator, &prov).map(|_| ())
            })
        }
        Command::Featurize { config, log, annotators, out } => {
            let cfg = load_config(&config)?;
            let prov = provenance(&cfg, config.config.is_some());
            with_bundle(&out, "featurize", prov.config_hash.clone(), |b| {
                b.seed("split", cfg.split.seed);
                let (events, infos) = stages::load_log(&log, &annotators)?;
                stages::featurize(b, "", &events, &infos, &cfg.split, &prov)
            })
        }
        Command::Preprocess { features, scope, out } => {
            let scope = Scope::parse(&scope)?;
            let fs = FeatureSet::load(&features)?;
            with_bundle(&out, "preprocess", fs.provenance.config_hash.clone(), |b| {
                seed_bundle(b, &fs.provenance);
                stages::preprocess(b, "", &fs.training(scope)?, &fs.provenance).map(|_| ())
            })
        }
        Command::Tune { config, features, scope, seed, out } => {
            let cfg = load_config(&config)?;
            let scope = Scope::parse(&scope)?;
            let fs = FeatureSet::load(&features)?;
            let seed = seed.unwrap_or(cfg.search.seed);
            with_bundle(&out, "tune", fs.provenance.config_hash.clone(), |b| {
                seed_bundle(b, &fs.provenance);
                b.seed("search", seed);
                let train = fs.training(scope)?;
                let s = &cfg.search;
                stages::tune(b, "", &train, &s.space, s.n_iter, seed, &cfg.model, &fs.provenance).map(|_| ())
            })
        }
        Command::Train { features, search, scope, out } => {
            let scope = Scope::parse(&scope)?;
            let fs = FeatureSet::load(&features)?;
            let search: stages::Stamped<auditlens_core::model_selection::SearchResult> = stages::read_json(&search)?;
            with_bundle(&out, "train", search.provenance.config_hash.clone(), |b| {
                seed_bundle(b, &search.provenance);
                b.seed("model", search.body.best.seed);
                let train = fs.training(scope)?;
                stages::train(b, "", scope.model_name(), &train, &search.body.best, &search.provenance).map(|_| ())
            })
        }
        Command::Evaluate { target } => {
            let (model, name, test) = target.load()?;
            with_bundle(&target.out, "evaluate", model.provenance.config_hash.clone(), |b| {
                seed_bundle(b, &model.provenance);
                stages::evaluate(b, "", &model, &name, &test).map(|_| ())
            })
        }
        Command::Explain { config, target, max_rows } => {
            let cfg = load_config(&config)?;
            if cfg.skip_shap {
                return Err(CliError::Usage("stage disabled: explain is turned off by `skip_shap`".into()));
            }
            let (model, name, test) = target.load()?;
            let max_rows = max_rows.unwrap_or(cfg.shap_max_rows);
            if max_rows == 0 {
                return Err(CliError::Usage("--max-rows must be positive".into()));
            }
            with_bundle(&target.out, "explain", model.provenance.config_hash.clone(), |b| {
                seed_bundle(b, &model.provenance);
                stages::explain(b, "", &model, &name, &test, max_rows).map(|_| ())
            })
        }
        Command::AuditSim { config, target } => {
            let cfg = load_config(&config)?;
            if cfg.skip_audit {
                return Err(CliError::Usage("stage disabled: audit-sim is turned off by `skip_audit`".into()));
            }
            let (model, name, test) = target.load()?;
            with_bundle(&target.out, "audit-sim", model.provenance.config_hash.clone(), |b| {
                seed_bundle(b, &model.provenance);
                stages::audit(b, "", &model, &name, &test, &cfg.audit).map(|_| ())
            })
        }
        Command::Experiment { config, out, quiet } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            experiment::run(&cfg, quiet).map(|_| ())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
