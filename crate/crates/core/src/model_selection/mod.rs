//! Metrics, randomized hyperparameter search and cross-application evaluation.

pub mod metrics;

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation_log::{holdout_partition, validation_seed, DatasetSplit};
use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;
use crate::gbdt::{self, Ensemble, Hyperparams, PreparedMatrix};
use crate::preprocess::{self, Design, PreprocessorState};
use metrics::{auc, classification_report, EvalReport, DEFAULT_THRESHOLD};

/// Share of the training rows held out to score each sampled configuration.
pub const VALIDATION_FRACTION: f64 = 0.3;
pub const DEFAULT_N_ITER: usize = 50;

/// Candidate values for each tuned hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_child_weight: Vec<f64>,
    pub gamma: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_estimators: vec![10, 50, 100, 150, 200, 500, 1000],
            max_depth: (3..=10).collect(),
            min_child_weight: (1..=6).map(f64::from).collect(),
            gamma: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            subsample: vec![0.6, 0.8, 1.0],
            colsample_bytree: vec![0.6, 0.7, 0.8, 0.9, 1.0],
            learning_rate: vec![0.01, 0.05, 0.1, 0.2, 0.3],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("n_estimators", self.n_estimators.len()),
            ("max_depth", self.max_depth.len()),
            ("min_child_weight", self.min_child_weight.len()),
            ("gamma", self.gamma.len()),
            ("subsample", self.subsample.len()),
            ("colsample_bytree", self.colsample_bytree.len()),
            ("learning_rate", self.learning_rate.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, len)| *len == 0) {
            return Err(Error::InvalidConfig(format!("search space `{name}` has no candidates")));
        }
        Ok(())
    }

    /// Draws one value per hyperparameter; fixed fields come from `base`.
    pub fn sample<R: Rng>(&self, rng: &mut R, base: &Hyperparams) -> Hyperparams {
        Hyperparams {
            n_estimators: *self.n_estimators.choose(rng).unwrap(),
            max_depth: *self.max_depth.choose(rng).unwrap(),
            min_child_weight: *self.min_child_weight.choose(rng).unwrap(),
            gamma: *self.gamma.choose(rng).unwrap(),
            subsample: *self.subsample.choose(rng).unwrap(),
            colsample_bytree: *self.colsample_bytree.choose(rng).unwrap(),
            learning_rate: *self.learning_rate.choose(rng).unwrap(),
            ..base.clone()
        }
    }

    pub fn contains(&self, hp: &Hyperparams) -> bool {
        self.n_estimators.contains(&hp.n_estimators)
            && self.max_depth.contains(&hp.max_depth)
            && self.min_child_weight.contains(&hp.min_child_weight)
            && self.gamma.contains(&hp.gamma)
            && self.subsample.contains(&hp.subsample)
            && self.colsample_bytree.contains(&hp.colsample_bytree)
            && self.learning_rate.contains(&hp.learning_rate)
    }
}

/// The rows a model may be fitted and tuned on. Built from a split, it never
/// holds test rows, so anything that only receives a `TrainingSet` cannot
/// read the test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    matrix: FeatureMatrix,
}

impl TrainingSet {
    pub fn from_split(matrix: &FeatureMatrix, split: &DatasetSplit) -> Self {
        Self { matrix: matrix.select_ids(&split.fitting_ids()) }
    }

    /// Wraps a matrix the caller asserts holds no test rows.
    pub fn from_matrix(matrix: FeatureMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.matrix
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub index: usize,
    pub hyperparams: Hyperparams,
    pub validation_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Hyperparams,
    pub best_index: usize,
    pub history: Vec<SearchRecord>,
    pub n_inner_train: usize,
    pub n_validation: usize,
}

impl SearchResult {
    pub fn best_auc(&self) -> f64 {
        self.history[self.best_index].validation_auc
    }
}

fn both_classes(target: &[bool]) -> bool {
    target.iter().any(|&t| t) && target.iter().any(|&t| !t)
}

/// Per-configuration model seed, distinct for every draw of a search.
fn config_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// Samples `n_iter` configurations, scores each on a held-out share of the
/// training rows, and returns the best by validation AUC (earliest on ties).
///
/// The preprocessor is refitted on the inner training rows so validation rows
/// never inform the scaling statistics.
pub fn random_search(
    train: &TrainingSet,
    space: &SearchSpace,
    n_iter: usize,
    seed: u64,
    base: &Hyperparams,
) -> Result<SearchResult> {
    if n_iter == 0 {
        return Err(Error::InvalidConfig("n_iter must be at least 1".into()));
    }
    space.validate()?;
    let m = train.matrix();
    let rows: Vec<usize> = (0..m.n_rows()).collect();
    let mut partition = None;
    for attempt in 0..2u64 {
        let (inner, held) = holdout_partition(&rows, VALIDATION_FRACTION, validation_seed(seed).wrapping_add(attempt));
        let inner_m = m.select_rows(&inner);
        let held_m = m.select_rows(&held);
        if both_classes(&inner_m.target) && both_classes(&held_m.target) {
            partition = Some((inner_m, held_m));
            break;
        }
    }
    let Some((inner, validation)) = partition else {
        return Err(Error::Degenerate("validation split lacks one class after resampling".into()));
    };

    let state = preprocess::fit(&inner)?;
    let inner_design = state.transform(&inner)?;
    let validation_design = state.transform(&validation)?;
    let prepared = PreparedMatrix::new(&inner_design.x)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut history = Vec::with_capacity(n_iter);
    let mut best_index = 0;
    for index in 0..n_iter {
        let hp = Hyperparams { seed: config_seed(seed, index), ..space.sample(&mut rng, base) };
        let ensemble = gbdt::train_prepared(&prepared, &inner.target, &hp, None)?;
        let scores = ensemble.predict_proba(&validation_design.x)?;
        let validation_auc = auc(&scores, &validation.target)?;
        if validation_auc > history.get(best_index).map_or(f64::NEG_INFINITY, |r: &SearchRecord| r.validation_auc) {
            best_index = index;
        }
        history.push(SearchRecord { index, hyperparams: hp, validation_auc });
    }
    Ok(SearchResult {
        best: history[best_index].hyperparams.clone(),
        best_index,
        history,
        n_inner_train: inner.n_rows(),
        n_validation: validation.n_rows(),
    })
}

/// A fitted preprocessor together with the ensemble trained on its output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub preprocessor: PreprocessorState,
    pub ensemble: Ensemble,
    pub source_features: Vec<String>,
    pub n_train_rows: usize,
}

impl TrainedModel {
    pub fn design(&self, m: &FeatureMatrix) -> Result<Design> {
        self.preprocessor.transform(m)
    }

    pub fn predict_proba(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        self.ensemble.predict_proba(&self.design(m)?.x)
    }

    pub fn evaluate(&self, test: &FeatureMatrix) -> Result<EvalReport> {
        classification_report(&self.predict_proba(test)?, &test.target, DEFAULT_THRESHOLD)
    }
}

/// Refits preprocessing and the ensemble on every training row.
pub fn fit_final(train: &TrainingSet, best: &Hyperparams) -> Result<TrainedModel> {
    let m = train.matrix();
    if !both_classes(&m.target) {
        return Err(Error::Degenerate("training rows hold a single class".into()));
    }
    let preprocessor = preprocess::fit(m)?;
    let design = preprocessor.transform(m)?;
    let mut ensemble = gbdt::train(&design.x, &m.target, best)?;
    ensemble.feature_names = design.column_names;
    Ok(TrainedModel { preprocessor, ensemble, source_features: design.source_features, n_train_rows: m.n_rows() })
}

/// AUC of every model (rows) on every test set (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucMatrix {
    pub models: Vec<String>,
    pub test_sets: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl AucMatrix {
    pub fn get(&self, model: &str, test_set: &str) -> Option<f64> {
        let i = self.models.iter().position(|m| m == model)?;
        let j = self.test_sets.iter().position(|t| t == test_set)?;
        Some(self.values[i][j])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trained_on".to_string()];
        header.extend(self.test_sets.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.models.iter().zip(&self.values) {
            let mut record = vec![name.clone()];
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn cross_application_matrix(
    models: &[(String, &TrainedModel)],
    test_sets: &[(String, &FeatureMatrix)],
) -> Result<AucMatrix> {
    if models.is_empty() || test_sets.is_empty() {
        return Err(Error::InsufficientData("need at least one model and one test set".into()));
    }
    let mut values = Vec::with_capacity(models.len());
    for (_, model) in models {
        let row = test_sets
            .iter()
            .map(|(_, test)| auc(&model.predict_proba(test)?, &test.target))
            .collect::<Result<Vec<f64>>>()?;
        values.push(row);
    }
    Ok(AucMatrix {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        test_sets: test_sets.iter().map(|(n, _)| n.clone()).collect(),
        values,
    })
}

#[derive(Serialize)]
struct HistoryRow {
    index: usize,
    n_estimators: usize,
    max_depth: usize,
    min_child_weight: f64,
    gamma: f64,
    subsample: f64,
    colsample_bytree: f64,
    learning_rate: f64,
    seed: u64,
    validation_auc: f64,
}

pub fn write_history_csv<W: Write>(history: &[SearchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in history {
        let hp = &r.hyperparams;
        w.serialize(HistoryRow {
            index: r.index,
            n_estimators: hp.n_estimators,
            max_depth: hp.max_depth,
            min_child_weight: hp.min_child_weight,
            gamma: hp.gamma,
            subsample: hp.subsample,
            colsample_bytree: hp.colsample_bytree,
            learning_rate: hp.learning_rate,
            seed: hp.seed,
            validation_auc: r.validation_auc,
        })?;
    }
    w.flush()?;
    Ok(())
}
