//! The end-to-end experiment: every stage, every model, every table.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use auditlens_core::annotation_log::AnnotationEvent;
use auditlens_core::audit_sim::AuditCurves;
use auditlens_core::explain::{importance_correlation, ImportanceVector};
use auditlens_core::featurize::FeatureMatrix;
use auditlens_core::model_selection::metrics::{auc, EvalReport};
use auditlens_core::model_selection::{cross_application_matrix, AucMatrix, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::manifest::{Bundle, Status};
use crate::stages::{self, join, FeatureSet, Provenance, Scope, Stamped, COMBINED};
use crate::svg::{line_chart, Series};

struct Progress {
    start: Instant,
    quiet: bool,
}

impl Progress {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("[{:>7.1}s] {msg}", self.start.elapsed().as_secs_f64());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub n_train_rows: usize,
    pub best_validation_auc: f64,
    pub best_index: usize,
    pub test_set: String,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n_events: usize,
    pub error_rate: f64,
    pub n_test: usize,
    /// AUC of the generator's hidden probabilities on the pooled test rows.
    pub oracle_test_auc: Option<f64>,
    /// `(auc - 0.5) / (oracle - 0.5)` for the task-agnostic model.
    pub oracle_excess_ratio: Option<f64>,
    pub models: Vec<ModelSummary>,
    pub auc_matrix: AucMatrix,
    pub importance_correlation: Option<CorrelationMatrix>,
    pub audit: Option<stages::AuditSummary>,
    pub oracle_audit: Option<stages::AuditSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub models: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Runs the experiment, flagging the manifest incomplete when a stage fails.
pub fn run(config: &ExperimentConfig, quiet: bool) -> CliResult<ExperimentSummary> {
    let mut bundle = Bundle::create(&config.output_dir, "experiment")?;
    bundle.set_config_hash(config.hash());
    let mut current = "setup";
    let result = run_stages(config, &mut bundle, &mut current, quiet);
    match &result {
        Ok(_) => bundle.finish(Status::Complete, None)?,
        Err(e) => {
            let stage = match e {
                CliError::Stage { stage, .. } => stage,
                _ => current,
            };
            bundle.finish(Status::Incomplete, Some(stage))?;
        }
    }
    result
}

fn run_stages(
    config: &ExperimentConfig,
    bundle: &mut Bundle,
    current: &mut &'static str,
    quiet: bool,
) -> CliResult<ExperimentSummary> {
    let progress = Progress { start: Instant::now(), quiet };
    let mut prov = Provenance { config_hash: Some(config.hash()), ..Default::default() };
    prov.seeds.insert("split".into(), config.split.seed);
    prov.seeds.insert("search".into(), config.search.seed);
    bundle.seed("split", config.split.seed);
    bundle.seed("search", config.search.seed);
    bundle.write_json("config.json", &config.canonical())?;

    // Data: either the configured log or a synthetic one.
    *current = "generate";
    let (log_path, annotators_path) = match (&config.log_path, &config.annotators_path) {
        (Some(l), Some(a)) => (l.clone(), a.clone()),
        _ => {
            progress.note("generating synthetic log");
            prov.seeds.insert("generator".into(), config.generator.seed);
            bundle.seed("generator", config.generator.seed);
            stages::generate(bundle, "data", &config.generator, &prov)?;
            (bundle.root().join(join("data", stages::LOG_FILE)), bundle.root().join(join("data", stages::ANNOTATORS_FILE)))
        }
    };
    let truth_path = bundle.root().join(join("data", stages::TRUTH_FILE));
    let synthetic = config.log_path.is_none();

    *current = "featurize";
    progress.note("building features");
    let (events, annotators) = stages::load_log(&log_path, &annotators_path)?;
    stages::featurize(bundle, "features", &events, &annotators, &config.split, &prov)?;
    let features = FeatureSet::load(&bundle.root().join("features"))?;
    let n_events = events.len();

    let mut scopes: Vec<Scope> = config.applications.iter().map(|&a| Scope::Application(a)).collect();
    scopes.push(Scope::All);

    let mut models: Vec<(String, Stamped<stages::ModelArtifact>)> = Vec::new();
    let mut summaries = Vec::new();
    let mut importances: Vec<(String, ImportanceVector)> = Vec::new();
    for (i, &scope) in scopes.iter().enumerate() {
        let name = scope.model_name();
        let dir = join("models", name);
        let train = features.training(scope)?;

        *current = "preprocess";
        stages::preprocess(bundle, &dir, &train, &prov)?;

        *current = "tune";
        progress.note(&format!("{name}: searching {} configurations on {} rows", config.search.n_iter, train.n_rows()));
        let search_seed = config.search.seed.wrapping_add(i as u64);
        let search = stages::tune(
            bundle,
            &dir,
            &train,
            &config.search.space,
            config.search.n_iter,
            search_seed,
            &config.model,
            &prov,
        )?;

        *current = "train";
        progress.note(&format!("{name}: training {:?}", search.best));
        let model_prov = prov.with_seed("search", search_seed);
        stages::train(bundle, &dir, name, &train, &search.best, &model_prov)?;
        let model = stages::load_model(&bundle.root().join(join(&dir, stages::MODEL_FILE)))?;

        *current = "evaluate";
        let test = features.test(scope)?;
        let report = stages::evaluate(bundle, &dir, &model, scope.test_set_name(), &test)?;
        progress.note(&format!("{name}: test AUC {:.4}", report.auc));
        summaries.push(ModelSummary {
            name: name.to_string(),
            n_train_rows: model.body.model.n_train_rows,
            best_validation_auc: search.best_auc(),
            best_index: search.best_index,
            test_set: scope.test_set_name().to_string(),
            test: report,
        });

        if !config.skip_shap {
            *current = "explain";
            progress.note(&format!("{name}: explaining up to {} test rows", config.shap_max_rows));
            let explanation = stages::explain(bundle, &dir, &model, scope.test_set_name(), &test, config.shap_max_rows)?;
            importances.push((name.to_string(), explanation.importance));
        }
        models.push((name.to_string(), model));
    }

    *current = "generalize";
    progress.note("cross-application evaluation");
    let test_sets: Vec<(String, FeatureMatrix)> = scopes
        .iter()
        .map(|&s| Ok((s.test_set_name().to_string(), features.test(s)?)))
        .collect::<CliResult<_>>()?;
    let model_refs: Vec<(String, &TrainedModel)> = models.iter().map(|(n, m)| (n.clone(), &m.body.model)).collect();
    let test_refs: Vec<(String, &FeatureMatrix)> = test_sets.iter().map(|(n, m)| (n.clone(), m)).collect();
    let matrix = cross_application_matrix(&model_refs, &test_refs).stage("generalize")?;
    bundle.write_with("tables/auc_matrix.csv", "generalize", |out| matrix.write_csv(out))?;

    let correlation = if importances.is_empty() {
        None
    } else {
        Some(write_importance_tables(bundle, &importances)?)
    };

    let combined = &test_sets.last().expect("combined test set").1;
    let truth: Option<HashMap<String, f64>> = if synthetic {
        Some(stages::read_truth(&truth_path)?.into_iter().map(|t| (t.task_id, t.true_error_probability)).collect())
    } else {
        None
    };
    let oracle_scores: Option<Vec<f64>> = truth.as_ref().map(|t| combined.task_ids.iter().map(|id| t[id]).collect());
    let oracle_test_auc = match &oracle_scores {
        Some(s) => Some(auc(s, &combined.target).stage("generalize")?),
        None => None,
    };

    let (mut audit, mut oracle_audit) = (None, None);
    if !config.skip_audit {
        *current = "audit-sim";
        progress.note("simulating audits");
        let (_, model) = models.last().expect("task-agnostic model");
        let (curves, summary) = stages::audit(bundle, "audit", model, COMBINED, combined, &config.audit)?;
        let oracle_curves = match &oracle_scores {
            Some(scores) => {
                let (c, s) =
                    stages::audit_scores(bundle, "audit/oracle", "oracle", COMBINED, combined, scores, &config.audit, &prov)?;
                oracle_audit = Some(s);
                Some(c)
            }
            None => None,
        };
        write_audit_charts(bundle, &curves, oracle_curves.as_ref())?;
        audit = Some(summary);
    }

    *current = "report";
    let task_agnostic_auc = summaries.last().map(|s| s.test.auc).unwrap_or(f64::NAN);
    let summary = ExperimentSummary {
        n_events,
        error_rate: error_rate(&events),
        n_test: combined.n_rows(),
        oracle_test_auc,
        oracle_excess_ratio: oracle_test_auc.map(|o| (task_agnostic_auc - 0.5) / (o - 0.5)),
        models: summaries,
        auc_matrix: matrix,
        importance_correlation: correlation,
        audit,
        oracle_audit,
    };
    bundle.write_json("summary.json", &Stamped { provenance: prov.clone(), body: &summary })?;
    bundle.write_bytes("summary.md", render_markdown(&summary).as_bytes())?;
    progress.note("done");
    Ok(summary)
}

fn error_rate(events: &[AnnotationEvent]) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    let errors = events.iter().filter(|e| auditlens_core::annotation_log::derive_verdict(e).is_error).count();
    errors as f64 / events.len() as f64
}

/// Importance table, pairwise correlation matrix and cumulative-importance curves.
fn write_importance_tables(bundle: &mut Bundle, importances: &[(String, ImportanceVector)]) -> CliResult<CorrelationMatrix> {
    let names: Vec<String> = importances.iter().map(|(n, _)| n.clone()).collect();
    // Rows follow the last model's ranking (the task-agnostic one in a full run).
    let reference = &importances.last().expect("at least one model").1;
    bundle.write_with("tables/importance.csv", "explain", |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for e in &reference.entries {
            let mut rec = vec![e.feature.clone()];
            rec.extend(importances.iter().map(|(_, v)| v.get(&e.feature).map_or(String::new(), |x| x.to_string())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;

    let n = importances.len();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = importance_correlation(&importances[i].1, &importances[j].1).stage("explain")?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    let correlation = CorrelationMatrix { models: names.clone(), values };
    bundle.write_with("tables/importance_correlation.csv", "explain", |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["model".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&correlation.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;

    let shares: Vec<(String, Vec<f64>)> = importances
        .iter()
        .map(|(name, v)| {
            let cum = v.cumulative();
            let total = cum.last().copied().unwrap_or(0.0);
            (name.clone(), cum.iter().map(|c| if total > 0.0 { c / total } else { 0.0 }).collect())
        })
        .collect();
    bundle.write_with("tables/cumulative_importance.csv", "explain", |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "rank", "feature", "cumulative_share"])?;
        for ((name, v), (_, share)) in importances.iter().zip(&shares) {
            for (k, (e, s)) in v.entries.iter().zip(share).enumerate() {
                w.write_record([name.clone(), (k + 1).to_string(), e.feature.clone(), s.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let series: Vec<Series> = shares
        .iter()
        .map(|(name, share)| Series {
            name: name.clone(),
            points: share.iter().enumerate().map(|(k, &s)| ((k + 1) as f64, s)).collect(),
        })
        .collect();
    let svg = line_chart("Cumulative feature importance", "features (by rank)", "share of total |SHAP|", &series);
    bundle.write_bytes("figures/cumulative_importance.svg", svg.as_bytes())?;
    Ok(correlation)
}

fn write_audit_charts(bundle: &mut Bundle, model: &AuditCurves, oracle: Option<&AuditCurves>) -> CliResult<()> {
    let ks = |c: &AuditCurves| (1..=c.n()).map(|k| k as f64).collect::<Vec<_>>();
    let mut flip = vec![Series { name: "model".into(), points: ks(model).into_iter().zip(model.flip_rate.clone()).collect() }];
    let mut coverage = vec![Series { name: "model".into(), points: ks(model).into_iter().zip(model.coverage.clone()).collect() }];
    if let Some(o) = oracle {
        flip.push(Series { name: "oracle".into(), points: ks(o).into_iter().zip(o.flip_rate.clone()).collect() });
        coverage.push(Series { name: "oracle".into(), points: ks(o).into_iter().zip(o.coverage.clone()).collect() });
    }
    let n = model.n() as f64;
    flip.push(Series { name: "random".into(), points: vec![(1.0, model.random_baseline_rate), (n, model.random_baseline_rate)] });
    coverage.push(Series { name: "random".into(), points: vec![(0.0, 0.0), (n, 1.0)] });
    let a = line_chart("Flip rate by audit count", "audits", "flip rate", &flip);
    bundle.write_bytes("figures/flip_rate.svg", a.as_bytes())?;
    let b = line_chart("Error coverage by audit count", "audits", "coverage", &coverage);
    bundle.write_bytes("figures/coverage.svg", b.as_bytes())?;
    Ok(())
}

fn render_markdown(s: &ExperimentSummary) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Annotation error model report\n");
    let _ = writeln!(md, "- events: {}", s.n_events);
    let _ = writeln!(md, "- error rate: {:.4}", s.error_rate);
    let _ = writeln!(md, "- pooled test rows: {}", s.n_test);
    if let Some(o) = s.oracle_test_auc {
        let _ = writeln!(md, "- oracle test AUC: {o:.4}");
    }
    if let Some(r) = s.oracle_excess_ratio {
        let _ = writeln!(md, "- task-agnostic share of oracle AUC excess: {r:.3}");
    }
    let _ = writeln!(md, "\n## Models\n");
    let _ = writeln!(md, "| model | train rows | validation AUC | test set | test AUC | accuracy | macro precision | macro recall |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
    for m in &s.models {
        let _ = writeln!(
            md,
            "| {} | {} | {:.4} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            m.name,
            m.n_train_rows,
            m.best_validation_auc,
            m.test_set,
            m.test.auc,
            m.test.accuracy,
            m.test.macro_precision,
            m.test.macro_recall
        );
    }
    let _ = writeln!(md, "\n## Cross-application AUC\n");
    let _ = writeln!(md, "| trained on | {} |", s.auc_matrix.test_sets.join(" | "));
    let _ = writeln!(md, "|---|{}", "---|".repeat(s.auc_matrix.test_sets.len()));
    for (name, row) in s.auc_matrix.models.iter().zip(&s.auc_matrix.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(md, "| {name} | {} |", cells.join(" | "));
    }
    if let Some(c) = &s.importance_correlation {
        let _ = writeln!(md, "\n## Importance correlation\n");
        let _ = writeln!(md, "| model | {} |", c.models.join(" | "));
        let _ = writeln!(md, "|---|{}", "---|".repeat(c.models.len()));
        for (name, row) in c.models.iter().zip(&c.values) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            let _ = writeln!(md, "| {name} | {} |", cells.join(" | "));
        }
    }
    for (title, a) in [("Audit simulation (model)", &s.audit), ("Audit simulation (oracle)", &s.oracle_audit)] {
        if let Some(a) = a {
            let _ = writeln!(md, "\n## {title}\n");
            let e = &a.efficiency;
            let _ = writeln!(
                md,
                "- audits to reach {:.0}% coverage: {} (random: {}), efficiency gain {:.1}%",
                e.target_coverage * 100.0,
                e.k_model,
                e.k_random,
                e.gain * 100.0
            );
            for l in &a.lifts {
                let _ = writeln!(md, "- lift at k={}: {:.2}", l.k, l.lift);
            }
        }
    }
    md
}

/// Convenience for callers holding only a path.
pub fn run_path(config_path: Option<&Path>, quiet: bool) -> CliResult<ExperimentSummary> {
    let config = ExperimentConfig::load_or_default(config_path)?;
    run(&config, quiet)
}
