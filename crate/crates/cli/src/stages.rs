//! Stage bodies shared by the single-stage subcommands and `experiment`.
//!
//! Each stage writes its outputs into a bundle under a relative directory and
//! reads its inputs from files, so any stage can be re-run on its own from the
//! previous stage's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use auditlens_core::annotation_log::{
    read_annotators, read_log, split_log, write_annotators, write_log, AnnotationEvent, AnnotatorInfo, Application,
    DatasetSplit,
};
use auditlens_core::audit_sim::{compute_curves, early_lift, efficiency_gain, rank_for_audit, AuditCurves, EfficiencyGain};
use auditlens_core::explain::{importance, shap_values, ImportanceVector, ShapMatrix};
use auditlens_core::featurize::{build_feature_matrix, read_feature_matrix, write_feature_matrix, FeatureMatrix};
use auditlens_core::gbdt::Hyperparams;
use auditlens_core::model_selection::metrics::EvalReport;
use auditlens_core::model_selection::{fit_final, random_search, SearchResult, SearchSpace, TrainedModel, TrainingSet};
use auditlens_core::preprocess::{self, PreprocessorState};
use auditlens_core::synthgen::{self, GenConfig, TruthRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{AuditConfig, SplitConfig};
use crate::error::{CliError, CliResult, StageContext};
use crate::manifest::Bundle;

pub const LOG_FILE: &str = "log.jsonl";
pub const ANNOTATORS_FILE: &str = "annotators.json";
pub const TRUTH_FILE: &str = "truth.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const SPLIT_FILE: &str = "split.json";
pub const PREPROCESSOR_FILE: &str = "preprocessor.json";
pub const SEARCH_FILE: &str = "search.json";
pub const HISTORY_FILE: &str = "search_history.csv";
pub const MODEL_FILE: &str = "model.json";
pub const EVAL_FILE: &str = "eval_report.json";
pub const SHAP_FILE: &str = "shap.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const IMPORTANCE_JSON: &str = "importance.json";
pub const CURVES_FILE: &str = "audit_curves.csv";
pub const AUDIT_FILE: &str = "audit_summary.json";

/// Name of the model trained on every application, and of the pooled test set.
pub const TASK_AGNOSTIC: &str = "task_agnostic";
pub const COMBINED: &str = "combined";

/// Config hash and seeds carried by every JSON artifact.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    pub seeds: BTreeMap<String, u64>,
}

impl Provenance {
    pub fn with_seed(&self, name: &str, seed: u64) -> Self {
        let mut p = self.clone();
        p.seeds.insert(name.to_string(), seed);
        p
    }
}

/// A payload plus its provenance, the shape of every JSON artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
}

pub fn join(dir: &str, file: &str) -> String {
    if dir.is_empty() {
        file.to_string()
    } else {
        format!("{dir}/{file}")
    }
}

/// Which rows a model is trained on: one application or all of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Application(Application),
    All,
}

impl Scope {
    pub fn model_name(self) -> &'static str {
        match self {
            Scope::Application(a) => a.as_str(),
            Scope::All => TASK_AGNOSTIC,
        }
    }

    pub fn test_set_name(self) -> &'static str {
        match self {
            Scope::Application(a) => a.as_str(),
            Scope::All => COMBINED,
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            TASK_AGNOSTIC | COMBINED | "all" => Ok(Scope::All),
            _ => s
                .parse::<Application>()
                .map(Scope::Application)
                .map_err(|_| CliError::Usage(format!("unknown scope `{s}`"))),
        }
    }

    pub fn select(self, m: &FeatureMatrix) -> CliResult<FeatureMatrix> {
        match self {
            Scope::Application(a) => m.select_application(a).stage("select"),
            Scope::All => Ok(m.clone()),
        }
    }
}

// ---------------------------------------------------------------- generate

#[derive(Serialize, Deserialize)]
pub struct GenerationInfo {
    pub n_events: usize,
    pub n_annotators: usize,
    pub realized_error_rate: f64,
    pub intercept: f64,
    pub oracle_auc: Option<f64>,
}

pub fn generate(bundle: &mut Bundle, dir: &str, config: &GenConfig, prov: &Provenance) -> CliResult<GenerationInfo> {
    let (population, log) = synthgen::generate(config).stage("generate")?;
    let annotators = population.annotator_infos();
    write_log(bundle.path(&join(dir, LOG_FILE))?, &log.events).stage("generate")?;
    bundle.record(&join(dir, LOG_FILE))?;
    write_annotators(bundle.path(&join(dir, ANNOTATORS_FILE))?, &annotators).stage("generate")?;
    bundle.record(&join(dir, ANNOTATORS_FILE))?;
    bundle.write_with(&join(dir, TRUTH_FILE), "generate", |out| {
        let mut w = csv::Writer::from_writer(out);
        for t in &log.truth {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    })?;
    // Fewer than two classes (e.g. an empty log) leaves the oracle undefined.
    let oracle = synthgen::oracle_auc(&log.events, &log.true_probabilities()).ok();
    let info = GenerationInfo {
        n_events: log.events.len(),
        n_annotators: annotators.len(),
        realized_error_rate: log.realized_error_rate(),
        intercept: log.intercept,
        oracle_auc: oracle,
    };
    bundle.write_json(
        &join(dir, "generation.json"),
        &Stamped { provenance: prov.with_seed("generator", config.seed), body: &info },
    )?;
    Ok(info)
}

pub fn read_truth(path: &Path) -> CliResult<Vec<TruthRecord>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Stage { stage: "audit-sim", source: e.into() })?;
    r.deserialize()
        .collect::<Result<Vec<TruthRecord>, _>>()
        .map_err(|e| CliError::Stage { stage: "audit-sim", source: e.into() })
}

// ---------------------------------------------------------------- featurize

pub fn load_log(log: &Path, annotators: &Path) -> CliResult<(Vec<AnnotationEvent>, Vec<AnnotatorInfo>)> {
    let events = read_log(log).stage("featurize")?;
    let infos = read_annotators(annotators).stage("featurize")?;
    Ok((events, infos))
}

pub fn featurize(
    bundle: &mut Bundle,
    dir: &str,
    events: &[AnnotationEvent],
    annotators: &[AnnotatorInfo],
    split: &SplitConfig,
    prov: &Provenance,
) -> CliResult<()> {
    let matrix = build_feature_matrix(events, annotators).stage("featurize")?;
    let split = split_log(events, split.test_fraction, split.validation_fraction, split.seed).stage("featurize")?;
    let (csv_rel, schema_rel) = (join(dir, FEATURES_FILE), join(dir, SCHEMA_FILE));
    write_feature_matrix(bundle.path(&csv_rel)?, bundle.path(&schema_rel)?, &matrix).stage("featurize")?;
    bundle.record(&csv_rel)?;
    bundle.record(&schema_rel)?;
    bundle.write_json(&join(dir, SPLIT_FILE), &Stamped { provenance: prov.with_seed("split", split.seed), body: &split })?;
    Ok(())
}

/// Features, split and the provenance recorded with the split.
pub struct FeatureSet {
    pub matrix: FeatureMatrix,
    pub split: DatasetSplit,
    pub provenance: Provenance,
}

impl FeatureSet {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let matrix = read_feature_matrix(dir.join(FEATURES_FILE), dir.join(SCHEMA_FILE)).stage("featurize")?;
        let split: Stamped<DatasetSplit> = read_json(&dir.join(SPLIT_FILE))?;
        Ok(Self { matrix, split: split.body, provenance: split.provenance })
    }

    pub fn training(&self, scope: Scope) -> CliResult<TrainingSet> {
        Ok(TrainingSet::from_split(&scope.select(&self.matrix)?, &self.split))
    }

    pub fn test(&self, scope: Scope) -> CliResult<FeatureMatrix> {
        scope.select(&self.matrix.select_ids(&self.split.test_ids))
    }
}

// ---------------------------------------------------------------- preprocess

pub fn preprocess(bundle: &mut Bundle, dir: &str, train: &TrainingSet, prov: &Provenance) -> CliResult<PreprocessorState> {
    let state = preprocess::fit(train.matrix()).stage("preprocess")?;
    bundle.write_json(&join(dir, PREPROCESSOR_FILE), &Stamped { provenance: prov.clone(), body: &state })?;
    Ok(state)
}

// ---------------------------------------------------------------- tune

#[allow(clippy::too_many_arguments)]
pub fn tune(
    bundle: &mut Bundle,
    dir: &str,
    train: &TrainingSet,
    space: &SearchSpace,
    n_iter: usize,
    seed: u64,
    base: &Hyperparams,
    prov: &Provenance,
) -> CliResult<SearchResult> {
    let result = random_search(train, space, n_iter, seed, base).stage("tune")?;
    bundle.write_with(&join(dir, HISTORY_FILE), "tune", |out| {
        auditlens_core::model_selection::write_history_csv(&result.history, out)
    })?;
    bundle.write_json(&join(dir, SEARCH_FILE), &Stamped { provenance: prov.with_seed("search", seed), body: &result })?;
    Ok(result)
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub name: String,
    pub model: TrainedModel,
}

pub fn train(
    bundle: &mut Bundle,
    dir: &str,
    name: &str,
    train: &TrainingSet,
    hp: &Hyperparams,
    prov: &Provenance,
) -> CliResult<Stamped<ModelArtifact>> {
    let model = fit_final(train, hp).stage("train")?;
    let artifact = Stamped {
        provenance: prov.with_seed("model", hp.seed),
        body: ModelArtifact { name: name.to_string(), model },
    };
    bundle.write_json(&join(dir, MODEL_FILE), &artifact)?;
    Ok(artifact)
}

pub fn load_model(path: &Path) -> CliResult<Stamped<ModelArtifact>> {
    read_json(path)
}

// ---------------------------------------------------------------- evaluate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model: String,
    pub test_set: String,
    pub report: EvalReport,
}

pub fn evaluate(
    bundle: &mut Bundle,
    dir: &str,
    model: &Stamped<ModelArtifact>,
    test_name: &str,
    test: &FeatureMatrix,
) -> CliResult<EvalReport> {
    let report = model.body.model.evaluate(test).stage("evaluate")?;
    let body = Evaluation { model: model.body.name.clone(), test_set: test_name.to_string(), report: report.clone() };
    bundle.write_json(&join(dir, EVAL_FILE), &Stamped { provenance: model.provenance.clone(), body })?;
    Ok(report)
}

// ---------------------------------------------------------------- explain

/// Evenly spaced rows, at most `max_rows` of them, always including row 0.
pub fn thin_rows(n: usize, max_rows: usize) -> Vec<usize> {
    if n <= max_rows {
        return (0..n).collect();
    }
    (0..max_rows).map(|i| i * n / max_rows).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub model: String,
    pub test_set: String,
    pub n_explained: usize,
    pub n_test: usize,
    pub base_value: f64,
    /// Largest |base + sum(phi) - margin| over the explained rows.
    pub max_local_accuracy_error: f64,
    pub importance: ImportanceVector,
}

fn write_shap(out: impl std::io::Write, ids: &[String], shap: &ShapMatrix, margins: &[f64]) -> auditlens_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["task_id".to_string()];
    header.extend(shap.feature_names.iter().cloned());
    header.extend(["base_value".to_string(), "margin".to_string()]);
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(shap.row(i).iter().map(|v| v.to_string()));
        rec.push(shap.base_value.to_string());
        rec.push(margins[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn explain(
    bundle: &mut Bundle,
    dir: &str,
    model: &Stamped<ModelArtifact>,
    test_name: &str,
    test: &FeatureMatrix,
    max_rows: usize,
) -> CliResult<Explanation> {
    let rows = thin_rows(test.n_rows(), max_rows);
    let subset = test.select_rows(&rows);
    let m = &model.body.model;
    let design = m.design(&subset).stage("explain")?;
    let shap = shap_values(&m.ensemble, &design.x).stage("explain")?;
    let margins = m.ensemble.predict_margin(&design.x).stage("explain")?;
    let max_err = (0..shap.n_rows)
        .map(|i| (shap.base_value + shap.row(i).iter().sum::<f64>() - margins[i]).abs())
        .fold(0.0, f64::max);
    let imp = importance(&shap, &m.source_features).stage("explain")?;
    bundle.write_with(&join(dir, SHAP_FILE), "explain", |out| write_shap(out, &subset.task_ids, &shap, &margins))?;
    bundle.write_with(&join(dir, IMPORTANCE_FILE), "explain", |out| imp.write_csv(out))?;
    let body = Explanation {
        model: model.body.name.clone(),
        test_set: test_name.to_string(),
        n_explained: rows.len(),
        n_test: test.n_rows(),
        base_value: shap.base_value,
        max_local_accuracy_error: max_err,
        importance: imp,
    };
    bundle.write_json(&join(dir, IMPORTANCE_JSON), &Stamped { provenance: model.provenance.clone(), body: &body })?;
    Ok(body)
}

// ---------------------------------------------------------------- audit-sim

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub k: usize,
    pub lift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub model: String,
    pub test_set: String,
    pub n: usize,
    pub total_errors: usize,
    pub random_baseline_rate: f64,
    pub coverage_area: f64,
    pub efficiency: EfficiencyGain,
    pub lifts: Vec<Lift>,
}

pub fn summarize_curves(model: &str, test_set: &str, curves: &AuditCurves, cfg: &AuditConfig) -> CliResult<AuditSummary> {
    let efficiency = efficiency_gain(curves, cfg.target_coverage).stage("audit-sim")?;
    let lifts = cfg
        .lift_ks
        .iter()
        .filter(|&&k| k <= curves.n())
        .map(|&k| early_lift(curves, k).map(|lift| Lift { k, lift }))
        .collect::<auditlens_core::Result<Vec<_>>>()
        .stage("audit-sim")?;
    Ok(AuditSummary {
        model: model.to_string(),
        test_set: test_set.to_string(),
        n: curves.n(),
        total_errors: curves.total_errors,
        random_baseline_rate: curves.random_baseline_rate,
        coverage_area: curves.coverage_area(),
        efficiency,
        lifts,
    })
}

/// Ranks `test` by `scores` and writes the curves plus their summary.
#[allow(clippy::too_many_arguments)]
pub fn audit_scores(
    bundle: &mut Bundle,
    dir: &str,
    model_name: &str,
    test_name: &str,
    test: &FeatureMatrix,
    scores: &[f64],
    cfg: &AuditConfig,
    prov: &Provenance,
) -> CliResult<(AuditCurves, AuditSummary)> {
    let ranking = rank_for_audit(scores, &test.task_ids, &test.target).stage("audit-sim")?;
    let curves = compute_curves(&ranking).stage("audit-sim")?;
    let summary = summarize_curves(model_name, test_name, &curves, cfg)?;
    bundle.write_with(&join(dir, CURVES_FILE), "audit-sim", |out| curves.write_csv(out))?;
    bundle.write_json(&join(dir, AUDIT_FILE), &Stamped { provenance: prov.clone(), body: &summary })?;
    Ok((curves, summary))
}

pub fn audit(
    bundle: &mut Bundle,
    dir: &str,
    model: &Stamped<ModelArtifact>,
    test_name: &str,
    test: &FeatureMatrix,
    cfg: &AuditConfig,
) -> CliResult<(AuditCurves, AuditSummary)> {
    let scores = model.body.model.predict_proba(test).stage("audit-sim")?;
    audit_scores(bundle, dir, &model.body.name, test_name, test, &scores, cfg, &model.provenance)
}
