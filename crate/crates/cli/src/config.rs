//! Experiment configuration, loaded from TOML or JSON.

use std::path::{Path, PathBuf};

use auditlens_core::annotation_log::Application;
use auditlens_core::gbdt::Hyperparams;
use auditlens_core::model_selection::{SearchSpace, DEFAULT_N_ITER};
use auditlens_core::synthgen::GenConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.3, validation_fraction: 0.0, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub n_iter: usize,
    pub seed: u64,
    pub space: SearchSpace,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { n_iter: DEFAULT_N_ITER, seed: 13, space: SearchSpace::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub target_coverage: f64,
    pub lift_ks: Vec<usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { target_coverage: 0.8, lift_ks: vec![50, 100, 500] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Existing log to analyse; when absent a synthetic log is generated.
    pub log_path: Option<PathBuf>,
    pub annotators_path: Option<PathBuf>,
    pub generator: GenConfig,
    pub split: SplitConfig,
    pub search: SearchConfig,
    /// Fixed (untuned) model settings such as `l2_lambda` and `base_score`.
    pub model: Hyperparams,
    pub applications: Vec<Application>,
    pub skip_shap: bool,
    pub skip_audit: bool,
    /// Test rows explained per model; larger test sets are thinned evenly.
    pub shap_max_rows: usize,
    pub audit: AuditConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("auditlens-out"),
            log_path: None,
            annotators_path: None,
            generator: GenConfig::default(),
            split: SplitConfig::default(),
            search: SearchConfig::default(),
            model: Hyperparams::default(),
            applications: Application::ALL.to_vec(),
            skip_shap: false,
            skip_audit: false,
            shap_max_rows: 1000,
            audit: AuditConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |message: String| CliError::Config { path: path.to_path_buf(), message };
        let config: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| bad(e.to_string()))?,
        };
        config.validate().map_err(bad)?;
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.generator.validate().map_err(|e| e.to_string())?;
        self.model.validate().map_err(|e| e.to_string())?;
        self.search.space.validate().map_err(|e| e.to_string())?;
        if self.search.n_iter == 0 {
            return Err("search.n_iter must be at least 1".into());
        }
        if self.applications.is_empty() {
            return Err("at least one application is required".into());
        }
        if self.log_path.is_some() != self.annotators_path.is_some() {
            return Err("log_path and annotators_path must be given together".into());
        }
        let t = self.audit.target_coverage;
        if !(t > 0.0 && t <= 1.0) {
            return Err("audit.target_coverage must lie in (0, 1]".into());
        }
        if self.shap_max_rows == 0 {
            return Err("shap_max_rows must be positive".into());
        }
        Ok(())
    }

    /// The config with its output location cleared, as recorded in bundles.
    pub fn canonical(&self) -> Self {
        Self { output_dir: PathBuf::new(), ..self.clone() }
    }

    /// SHA-256 of the canonical JSON form, recorded with every artifact bundle.
    /// The output location is left out: it does not affect any result.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.canonical()).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
