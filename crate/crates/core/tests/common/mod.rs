//! Independent oracles and the checks built on them.
//!
//! Every check returns `Ok(detail)` or `Err(reason)` so the same code backs
//! both the integration tests and the acceptance report.
#![allow(dead_code)]

use std::collections::HashMap;

use auditlens_core::annotation_log::{split_log, AnnotationEvent, AnnotatorInfo};
use auditlens_core::explain::shap_values;
use auditlens_core::featurize::{build_feature_matrix, edit_distance, ColumnData, FeatureMatrix};
use auditlens_core::gbdt::{
    log_loss, logistic_grad_hess, split_gain, train, train_prepared, DenseMatrix, Ensemble, Hyperparams, Node,
    NodeKind, PreparedMatrix, Tree,
};
use auditlens_core::model_selection::metrics::auc;
use auditlens_core::model_selection::{fit_final, random_search, SearchSpace, TrainingSet};
use auditlens_core::preprocess;
use auditlens_core::synthgen::{generate, GenConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

const DAY: i64 = 86_400;
const MIN_HESSIAN: f64 = 1e-16;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------------ oracles

/// Textbook Levenshtein table over chars.
pub fn dp_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// AUC as the rational (twice the pair wins, 2 * pos * neg) by direct pair counting.
pub fn pair_count_auc(scores: &[f64], labels: &[bool]) -> (u64, u64) {
    let mut twice = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            pos += 1;
        } else {
            neg += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    (twice, 2 * pos * neg)
}

fn is_error(e: &AnnotationEvent) -> bool {
    e.annotator_label != e.audit_label
}

fn is_major(e: &AnnotationEvent) -> bool {
    (i32::from(e.annotator_label.level()) - i32::from(e.audit_label.level())).abs() > 2
}

fn rate(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Every rolling feature of every event by rescanning the whole log.
pub fn rescan_rolling(events: &[AnnotationEvent]) -> Vec<HashMap<String, Option<f64>>> {
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let t = e.timestamp;
        let mut row = HashMap::new();
        for w in [7i64, 14, 21, 28] {
            let in_window = |o: &&AnnotationEvent| o.timestamp >= t - w * DAY && o.timestamp < t;
            let own: Vec<&AnnotationEvent> =
                events.iter().filter(|o| o.annotator_id == e.annotator_id).filter(in_window).collect();
            let all: Vec<&AnnotationEvent> =
                events.iter().filter(|o| o.application == e.application).filter(in_window).collect();
            let own_rate = rate(own.iter().filter(|o| is_error(o)).count(), own.len());
            let all_rate = rate(all.iter().filter(|o| is_error(o)).count(), all.len());
            row.insert(format!("error_{w}"), own_rate);
            row.insert(format!("error_{w}_all"), all_rate);
            row.insert(format!("maj_error_{w}"), rate(own.iter().filter(|o| is_major(o)).count(), own.len()));
            row.insert(format!("maj_error_{w}_all"), rate(all.iter().filter(|o| is_major(o)).count(), all.len()));
            row.insert(
                format!("error_{w}_diff"),
                match (own_rate, all_rate) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                },
            );
            row.insert(format!("vol_last_{w}"), Some(own.len() as f64));
        }
        for (prefix, key) in [
            ("error_rolling_output_media_type_", &e.output_media_type),
            ("error_rolling_input_query_type_user_", &e.input_query_type),
        ] {
            let same_key = |o: &AnnotationEvent| {
                if prefix.contains("output") {
                    &o.output_media_type == key
                } else {
                    &o.input_query_type == key
                }
            };
            let mut prior: Vec<&AnnotationEvent> = events
                .iter()
                .filter(|o| o.annotator_id == e.annotator_id && o.timestamp < t && same_key(o))
                .collect();
            prior.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.task_id.cmp(&b.task_id)));
            for n in [1usize, 3, 5] {
                let last = &prior[prior.len().saturating_sub(n)..];
                row.insert(format!("{prefix}{n}"), rate(last.iter().filter(|o| !is_error(o)).count(), last.len()));
            }
        }
        out.push(row);
    }
    out
}

/// Cover-weighted expectation of a tree given the features in `known`.
fn conditional(tree: &Tree, node: usize, x: &[f64], known: u64) -> f64 {
    match tree.nodes[node].kind {
        NodeKind::Leaf { weight } => weight,
        NodeKind::Split { feature, threshold, left, right, .. } => {
            if known >> feature & 1 == 1 {
                conditional(tree, if x[feature] < threshold { left } else { right }, x, known)
            } else {
                let c = tree.nodes[node].cover;
                tree.nodes[left].cover / c * conditional(tree, left, x, known)
                    + tree.nodes[right].cover / c * conditional(tree, right, x, known)
            }
        }
    }
}

/// Shapley values by enumerating all `2^m` coalitions.
pub fn subset_shap(e: &Ensemble, x: &[f64]) -> Vec<f64> {
    let m = e.n_features;
    let value = |s: u64| e.trees.iter().map(|t| conditional(t, 0, x, s)).sum::<f64>();
    let values: Vec<f64> = (0..1u64 << m).map(value).collect();
    let fact: Vec<f64> = (0..=m).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    (0..m)
        .map(|i| {
            (0..1u64 << m)
                .filter(|s| s >> i & 1 == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    fact[k] * fact[m - k - 1] / fact[m] * (values[(s | 1 << i) as usize] - values[s as usize])
                })
                .sum()
        })
        .collect()
}

// ------------------------------------------------------------------ data

pub fn small_log(n_tasks: usize, n_annotators: usize, days: u32, seed: u64) -> (Vec<AnnotationEvent>, Vec<AnnotatorInfo>) {
    let config = GenConfig { n_tasks, n_annotators, duration_days: days, seed, ..GenConfig::default() };
    let (population, log) = generate(&config).expect("generator runs");
    (log.events, population.annotator_infos())
}

pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, m: usize) -> (DenseMatrix, Vec<bool>) {
    let levels = r.random_range(3..30);
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..m).map(|_| f64::from(r.random_range(0..levels)) / 3.0).collect()).collect();
    let w: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let y = rows
        .iter()
        .map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + r.random_range(-2.0..2.0) > 0.0)
        .collect();
    (DenseMatrix::from_rows(&rows).unwrap(), y)
}

fn random_tree(r: &mut ChaCha8Rng, m: usize, depth: usize) -> Tree {
    fn build(r: &mut ChaCha8Rng, nodes: &mut Vec<Node>, m: usize, depth: usize, cover: f64) -> usize {
        let id = nodes.len();
        let leaf = |cover: f64, weight: f64| Node { cover, grad: 0.0, n_rows: 0, kind: NodeKind::Leaf { weight } };
        if depth == 0 || r.random::<f64>() < 0.25 {
            let w = r.random_range(-2.0..2.0);
            nodes.push(leaf(cover, w));
            return id;
        }
        nodes.push(leaf(0.0, 0.0));
        let share = r.random_range(0.02..0.98);
        let feature = r.random_range(0..m);
        let threshold = r.random_range(0.0..1.0);
        let left = build(r, nodes, m, depth - 1, cover * share);
        let right = build(r, nodes, m, depth - 1, cover * (1.0 - share));
        nodes[id] = Node { cover, grad: 0.0, n_rows: 0, kind: NodeKind::Split { feature, threshold, left, right, gain: 1.0 } };
        id
    }
    let mut nodes = Vec::new();
    let cover = r.random_range(1.0..500.0);
    build(r, &mut nodes, m, depth, cover);
    Tree { nodes }
}

// ------------------------------------------------------------------ checks

pub fn edit_distance_matches_dp(n_pairs: usize, seed: u64) -> Check {
    let alphabet: Vec<char> = "abcab é ßxyz".chars().collect();
    let mut r = rng(seed);
    for _ in 0..n_pairs {
        let mut s = || -> String {
            let len = r.random_range(0..24);
            (0..len).map(|_| *alphabet.choose(&mut r).unwrap()).collect()
        };
        let (a, b) = (s(), s());
        let (got, want) = (edit_distance(&a, &b), dp_edit_distance(&a, &b));
        if got != want {
            return Err(format!("edit_distance({a:?}, {b:?}) = {got}, table gives {want}"));
        }
    }
    Ok(format!("{n_pairs} pairs identical"))
}

pub fn auc_matches_pair_counting(n_sets: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut done = 0;
    while done < n_sets {
        let n = r.random_range(2..300);
        let tie_levels = r.random_range(1..50);
        let continuous = r.random_bool(0.3);
        let scores: Vec<f64> = (0..n)
            .map(|_| if continuous { r.random() } else { f64::from(r.random_range(0..tie_levels)) })
            .collect();
        let p = r.random_range(0.05..0.95);
        let labels: Vec<bool> = (0..n).map(|_| r.random_bool(p)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            if auc(&scores, &labels).is_ok() {
                return Err("single-class labels accepted".into());
            }
            continue;
        }
        let (num, den) = pair_count_auc(&scores, &labels);
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        // Exact: the rational num/den rounded once.
        if got != num as f64 / den as f64 {
            return Err(format!("auc {got} vs pair count {num}/{den}"));
        }
        done += 1;
    }
    Ok(format!("{n_sets} sets equal to the pair-count rational"))
}

pub fn rolling_matches_rescan(n_events: usize, seed: u64) -> Check {
    let (events, infos) = small_log(n_events, 12, 45, seed);
    if events.len() != n_events {
        return Err(format!("expected {n_events} events, got {}", events.len()));
    }
    let m = build_feature_matrix(&events, &infos).map_err(|e| e.to_string())?;
    let oracle = rescan_rolling(&events);
    let names: Vec<&String> = oracle[0].keys().collect();
    let mut cells = 0;
    let mut present = 0;
    for name in &names {
        let Some(ColumnData::Numeric(col)) = m.column(name) else {
            return Err(format!("feature `{name}` missing or not numeric"));
        };
        for (i, row) in oracle.iter().enumerate() {
            if col[i] != row[*name] {
                return Err(format!("{name} on task {}: {:?} vs rescan {:?}", events[i].task_id, col[i], row[*name]));
            }
            cells += 1;
            present += usize::from(col[i].is_some());
        }
    }
    Ok(format!("{} features x {n_events} events ({cells} cells, {present} non-missing) identical", names.len()))
}

/// Every split's stored gain against `split_gain` of its children's stored
/// statistics, and those statistics against sums over the routed rows.
pub fn split_gains_recompute(n_datasets: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut n_splits = 0;
    for d in 0..n_datasets {
        let (n, m) = (r.random_range(50..400), r.random_range(1..8));
        let (x, y) = random_dataset(&mut r, n, m);
        let hp = Hyperparams {
            n_estimators: 8,
            max_depth: r.random_range(1..6),
            min_child_weight: [0.0, 0.5, 2.0][d % 3],
            gamma: [0.0, 0.1][d % 2],
            l2_lambda: [1.0, 0.0, 3.0][d % 3],
            learning_rate: 0.3,
            ..Hyperparams::default()
        };
        let e = train(&x, &y, &hp).map_err(|e| e.to_string())?;
        let mut margins = vec![e.base_margin; x.n_rows()];
        for tree in &e.trees {
            let gh: Vec<(f64, f64)> = margins
                .iter()
                .zip(&y)
                .map(|(&m, &t)| {
                    let (g, h) = logistic_grad_hess(1.0 / (1.0 + (-m).exp()), t);
                    (g, h.max(MIN_HESSIAN))
                })
                .collect();
            let mut sums = vec![(0.0, 0.0, 0usize); tree.nodes.len()];
            for (i, &(g, h)) in gh.iter().enumerate() {
                let mut k = 0;
                loop {
                    sums[k].0 += g;
                    sums[k].1 += h;
                    sums[k].2 += 1;
                    match tree.nodes[k].kind {
                        NodeKind::Leaf { .. } => break,
                        NodeKind::Split { feature, threshold, left, right, .. } => {
                            k = if x.get(i, feature) < threshold { left } else { right };
                        }
                    }
                }
            }
            for (k, node) in tree.nodes.iter().enumerate() {
                if sums[k].2 != node.n_rows
                    || (sums[k].0 - node.grad).abs() > 1e-9
                    || (sums[k].1 - node.cover).abs() > 1e-9
                {
                    return Err(format!("node {k}: routed stats {:?} vs stored {:?}", sums[k], node));
                }
                if let NodeKind::Split { left, right, gain, .. } = node.kind {
                    let (l, rr) = (&tree.nodes[left], &tree.nodes[right]);
                    let again = split_gain(l.grad, l.cover, rr.grad, rr.cover, hp.l2_lambda, hp.gamma);
                    if (again - gain).abs() > 1e-12 {
                        return Err(format!("stored gain {gain} vs recomputed {again}"));
                    }
                    if gain <= 0.0 || l.cover < hp.min_child_weight || rr.cover < hp.min_child_weight {
                        return Err(format!("split accepted with gain {gain}, covers {} / {}", l.cover, rr.cover));
                    }
                    n_splits += 1;
                }
            }
            for (i, m) in margins.iter_mut().enumerate() {
                *m += tree.predict(x.row(i));
            }
        }
    }
    Ok(format!("{n_splits} splits over {n_datasets} datasets recomputed"))
}

/// TreeSHAP against subset enumeration on random and trained ensembles.
pub fn shap_matches_subsets(n_ensembles: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for k in 0..n_ensembles {
        let m = r.random_range(1..=12);
        let n_trees = r.random_range(1..=5);
        let e = if k % 2 == 0 {
            let trees = (0..n_trees)
                .map(|_| {
                    let depth = r.random_range(1..=3);
                    random_tree(&mut r, m, depth)
                })
                .collect();
            Ensemble { trees, base_margin: r.random_range(-1.0..1.0), hyperparams: Hyperparams::default(), n_features: m, feature_names: vec![] }
        } else {
            let (x, y) = random_dataset(&mut r, 150, m);
            let hp = Hyperparams { n_estimators: n_trees, max_depth: r.random_range(1..=3), ..Hyperparams::default() };
            train(&x, &y, &hp).map_err(|e| e.to_string())?
        };
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..m).map(|_| r.random_range(-0.2..3.5)).collect()).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let s = shap_values(&e, &x).map_err(|e| e.to_string())?;
        for (i, row) in rows.iter().enumerate() {
            for (a, b) in s.row(i).iter().zip(subset_shap(&e, row)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    if worst < 1e-8 {
        Ok(format!("{n_ensembles} ensembles, max deviation {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e} exceeds 1e-8"))
    }
}

/// |base + sum(phi) - margin| on every row of full test matrices.
pub fn shap_local_accuracy(seed: u64) -> Check {
    let (events, infos) = small_log(4_000, 40, 60, seed);
    let m = build_feature_matrix(&events, &infos).map_err(|e| e.to_string())?;
    let split = split_log(&events, 0.3, 0.0, seed).map_err(|e| e.to_string())?;
    let train_set = TrainingSet::from_split(&m, &split);
    let test = m.select_ids(&split.test_ids);
    let mut worst = 0.0f64;
    let mut rows = 0;
    for (depth, n_trees, sub) in [(2, 30, 1.0), (4, 60, 0.8), (6, 40, 0.6), (8, 20, 1.0)] {
        let hp = Hyperparams { max_depth: depth, n_estimators: n_trees, subsample: sub, colsample_bytree: sub, seed, ..Hyperparams::default() };
        let model = fit_final(&train_set, &hp).map_err(|e| e.to_string())?;
        let design = model.design(&test).map_err(|e| e.to_string())?;
        let s = shap_values(&model.ensemble, &design.x).map_err(|e| e.to_string())?;
        let margins = model.ensemble.predict_margin(&design.x).map_err(|e| e.to_string())?;
        for (i, margin) in margins.iter().enumerate() {
            worst = worst.max((s.base_value + s.row(i).iter().sum::<f64>() - margin).abs());
        }
        rows += margins.len();
    }
    if worst < 1e-6 {
        Ok(format!("{rows} test rows over 4 models, max error {worst:.2e}"))
    } else {
        Err(format!("local accuracy error {worst:.2e} exceeds 1e-6"))
    }
}

pub fn loss_non_increasing(n_datasets: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut rounds = 0;
    for d in 0..n_datasets {
        let (n, m) = (r.random_range(100..600), r.random_range(2..10));
        let (x, y) = random_dataset(&mut r, n, m);
        let hp = Hyperparams {
            n_estimators: 40,
            max_depth: r.random_range(1..7),
            learning_rate: [0.3, 0.1, 0.05, 0.2, 0.01][d % 5],
            min_child_weight: [0.0, 1.0, 3.0][d % 3],
            subsample: 1.0,
            colsample_bytree: 1.0,
            seed: d as u64,
            ..Hyperparams::default()
        };
        let prepared = PreparedMatrix::new(&x).map_err(|e| e.to_string())?;
        let base = (hp.base_score / (1.0 - hp.base_score)).ln();
        let mut losses = vec![log_loss(&vec![base; y.len()], &y)];
        let mut observe = |_: usize, m: &[f64]| losses.push(log_loss(m, &y));
        train_prepared(&prepared, &y, &hp, Some(&mut observe)).map_err(|e| e.to_string())?;
        for (t, w) in losses.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(format!("dataset {d}: loss rose from {} to {} at round {}", w[0], w[1], t + 1));
            }
        }
        rounds += losses.len() - 1;
    }
    Ok(format!("{n_datasets} datasets, {rounds} rounds, loss never rose"))
}

pub fn zero_trees_constant(seed: u64) -> Check {
    let mut r = rng(seed);
    for base_score in [0.5, 0.1, 0.83] {
        let (x, y) = random_dataset(&mut r, 50, 4);
        let hp = Hyperparams { n_estimators: 0, base_score, ..Hyperparams::default() };
        let e = train(&x, &y, &hp).map_err(|e| e.to_string())?;
        let p = e.predict_proba(&x).map_err(|e| e.to_string())?;
        if !e.trees.is_empty() || p.iter().any(|&v| (v - base_score).abs() > 1e-15) {
            return Err(format!("n_estimators=0 with base_score {base_score} predicted {:?}", &p[..3]));
        }
    }
    Ok("base_score predicted on every row for 3 base scores".into())
}

// ------------------------------------------------------------------ leakage

/// A copy of `m` whose test rows carry wild values, new tokens and flipped labels.
pub fn mutate_rows(m: &FeatureMatrix, ids: &[String], seed: u64) -> FeatureMatrix {
    let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
    let mut r = rng(seed);
    let mut out = m.clone();
    for i in 0..out.n_rows() {
        if !wanted.contains(out.task_ids[i].as_str()) {
            continue;
        }
        out.target[i] = !out.target[i];
        for col in &mut out.columns {
            match col {
                ColumnData::Numeric(v) => v[i] = if r.random_bool(0.2) { None } else { Some(r.random_range(-1e6..1e6)) },
                ColumnData::Categorical(v) => v[i] = Some(format!("unseen-{}", r.random_range(0..5))),
            }
        }
    }
    out
}

pub fn preprocessing_ignores_test(seed: u64) -> Check {
    let (events, infos) = small_log(3_000, 30, 60, seed);
    let m = build_feature_matrix(&events, &infos).map_err(|e| e.to_string())?;
    let split = split_log(&events, 0.3, 0.1, seed).map_err(|e| e.to_string())?;
    let before = preprocess::fit(TrainingSet::from_split(&m, &split).matrix()).map_err(|e| e.to_string())?;
    for k in 0..3 {
        let mutated = mutate_rows(&m, &split.test_ids, seed + k);
        let after = preprocess::fit(TrainingSet::from_split(&mutated, &split).matrix()).map_err(|e| e.to_string())?;
        if after != before {
            return Err("preprocessing statistics changed when test rows changed".into());
        }
    }
    // Sanity: mutating a training row does move the statistics.
    let probe = mutate_rows(&m, &split.train_ids[..1], seed);
    let moved = preprocess::fit(TrainingSet::from_split(&probe, &split).matrix()).map_err(|e| e.to_string())?;
    if moved == before {
        return Err("a mutated training row left the statistics unchanged; the probe is blind".into());
    }
    Ok(format!("statistics identical across 3 mutations of {} test rows", split.test_ids.len()))
}

/// Deleting every event after a cutoff leaves all earlier feature rows unchanged.
pub fn temporal_hygiene(seed: u64) -> Check {
    let (events, infos) = small_log(2_500, 25, 50, seed);
    let full = build_feature_matrix(&events, &infos).map_err(|e| e.to_string())?;
    let mut timestamps: Vec<i64> = events.iter().map(|e| e.timestamp).collect();
    timestamps.sort_unstable();
    let mut compared = 0;
    for q in [0.25, 0.5, 0.8] {
        let cutoff = timestamps[(q * timestamps.len() as f64) as usize];
        let past: Vec<AnnotationEvent> = events.iter().filter(|e| e.timestamp <= cutoff).cloned().collect();
        let truncated = build_feature_matrix(&past, &infos).map_err(|e| e.to_string())?;
        let index: HashMap<&str, usize> = full.task_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        for (j, id) in truncated.task_ids.iter().enumerate() {
            let i = index[id.as_str()];
            for (a, b) in full.columns.iter().zip(&truncated.columns) {
                let same = match (a, b) {
                    (ColumnData::Numeric(a), ColumnData::Numeric(b)) => a[i] == b[j],
                    (ColumnData::Categorical(a), ColumnData::Categorical(b)) => a[i] == b[j],
                    _ => false,
                };
                if !same {
                    return Err(format!("task {id} changed after deleting events past {cutoff}"));
                }
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} past rows unchanged across 3 cutoffs"))
}

/// The tuner only ever sees a `TrainingSet`; test mutations cannot reach it.
pub fn tuner_isolated(seed: u64) -> Check {
    let (events, infos) = small_log(2_000, 20, 40, seed);
    let m = build_feature_matrix(&events, &infos).map_err(|e| e.to_string())?;
    let split = split_log(&events, 0.3, 0.0, seed).map_err(|e| e.to_string())?;
    let space = SearchSpace { n_estimators: vec![5, 10], max_depth: vec![2, 3], ..SearchSpace::default() };
    let train_set = TrainingSet::from_split(&m, &split);
    let test_ids: std::collections::HashSet<&str> = split.test_ids.iter().map(String::as_str).collect();
    if train_set.matrix().task_ids.iter().any(|id| test_ids.contains(id.as_str())) {
        return Err("training set holds a test id".into());
    }
    let base = random_search(&train_set, &space, 4, seed, &Hyperparams::default()).map_err(|e| e.to_string())?;
    let mutated = mutate_rows(&m, &split.test_ids, seed ^ 1);
    let again = random_search(&TrainingSet::from_split(&mutated, &split), &space, 4, seed, &Hyperparams::default())
        .map_err(|e| e.to_string())?;
    if again != base {
        return Err("search history changed when only test rows changed".into());
    }
    Ok(format!("no test id among {} tuning rows; history unchanged after mutating {} test rows", train_set.n_rows(), test_ids.len()))
}
