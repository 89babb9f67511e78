//! Tree SHAP attributions, feature importances and their correlations.
//!
//! Attributions are exact Shapley values of the ensemble margin where a
//! missing feature is handled by averaging over both children, weighted by
//! the training cover that reached each child.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{DenseMatrix, Ensemble, NodeKind, Tree};

/// Which node weight drives the conditional expectations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverKind {
    /// Training hessian sums, as used for split finding.
    #[default]
    Hessian,
    /// Training row counts.
    Count,
}

fn node_cover(tree: &Tree, i: usize, kind: CoverKind) -> f64 {
    match kind {
        CoverKind::Hessian => tree.nodes[i].cover,
        CoverKind::Count => tree.nodes[i].n_rows as f64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major attributions on the margin scale.
    pub values: Vec<f64>,
    pub base_value: f64,
    pub feature_names: Vec<String>,
}

impl ShapMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.feature_names)?;
        for i in 0..self.n_rows {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

const EMPTY_ELEMENT: PathElement = PathElement { feature: None, zero: 0.0, one: 0.0, weight: 0.0 };

fn extend(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
    path[depth] = PathElement { feature, zero, one, weight: if depth == 0 { 1.0 } else { 0.0 } };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut [PathElement], depth: usize, index: usize) {
    let PathElement { one, zero, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
}

fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let PathElement { one, zero, .. } = path[index];
    let mut next_one = path[depth].weight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next_one / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].weight - tmp * zero * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].weight / (zero * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

struct TreeExplainer<'a> {
    tree: &'a Tree,
    kind: CoverKind,
    x: &'a [f64],
}

impl TreeExplainer<'_> {
    /// `buf[start..start + depth]` holds the parent's path; this node's path
    /// is built right after it.
    #[allow(clippy::too_many_arguments)]
    fn recurse(&self, phi: &mut [f64], buf: &mut [PathElement], start: usize, depth: usize, node: usize, zero: f64, one: f64, feature: Option<usize>) {
        let mine = start + depth;
        buf.copy_within(start..start + depth, mine);
        let path = &mut buf[mine..];
        extend(path, depth, zero, one, feature);
        match self.tree.nodes[node].kind {
            NodeKind::Leaf { weight } => {
                for i in 1..=depth {
                    let w = unwound_sum(path, depth, i);
                    let el = path[i];
                    if let Some(f) = el.feature {
                        phi[f] += w * (el.one - el.zero) * weight;
                    }
                }
            }
            NodeKind::Split { feature: split, threshold, left, right, .. } => {
                let (hot, cold) = if self.x[split] < threshold { (left, right) } else { (right, left) };
                let cover = node_cover(self.tree, node, self.kind);
                let hot_zero = node_cover(self.tree, hot, self.kind) / cover;
                let cold_zero = node_cover(self.tree, cold, self.kind) / cover;
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                let mut depth = depth;
                if let Some(k) = (1..=depth).find(|&k| path[k].feature == Some(split)) {
                    in_zero = path[k].zero;
                    in_one = path[k].one;
                    unwind(path, depth, k);
                    depth -= 1;
                }
                self.recurse(phi, buf, mine, depth + 1, hot, hot_zero * in_zero, in_one, Some(split));
                self.recurse(phi, buf, mine, depth + 1, cold, cold_zero * in_zero, 0.0, Some(split));
            }
        }
    }
}

/// Cover-weighted expectation of a tree's output with no feature known.
fn expected_value(tree: &Tree, node: usize, kind: CoverKind) -> f64 {
    match tree.nodes[node].kind {
        NodeKind::Leaf { weight } => weight,
        NodeKind::Split { left, right, .. } => {
            let c = node_cover(tree, node, kind);
            node_cover(tree, left, kind) / c * expected_value(tree, left, kind)
                + node_cover(tree, right, kind) / c * expected_value(tree, right, kind)
        }
    }
}

fn check_covers(e: &Ensemble, kind: CoverKind) -> Result<()> {
    for tree in &e.trees {
        for (i, node) in tree.nodes.iter().enumerate() {
            if matches!(node.kind, NodeKind::Split { .. }) || tree.nodes.len() > 1 {
                let c = node_cover(tree, i, kind);
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::MissingCover);
                }
            }
        }
    }
    Ok(())
}

/// Expected margin with no feature known.
pub fn base_value(e: &Ensemble, kind: CoverKind) -> f64 {
    e.base_margin + e.trees.iter().map(|t| expected_value(t, 0, kind)).sum::<f64>()
}

pub fn shap_values(e: &Ensemble, x: &DenseMatrix) -> Result<ShapMatrix> {
    shap_values_with(e, x, CoverKind::Hessian)
}

pub fn shap_values_with(e: &Ensemble, x: &DenseMatrix, kind: CoverKind) -> Result<ShapMatrix> {
    if x.n_cols() != e.n_features {
        return Err(Error::Dimension { expected: e.n_features, actual: x.n_cols() });
    }
    check_covers(e, kind)?;
    let max_depth = e.trees.iter().map(Tree::depth).max().unwrap_or(0);
    let mut buf = vec![EMPTY_ELEMENT; (max_depth + 2) * (max_depth + 3)];
    let m = x.n_cols();
    let mut values = vec![0.0; x.n_rows() * m];
    for (r, phi) in values.chunks_mut(m.max(1)).enumerate().take(x.n_rows()) {
        for tree in &e.trees {
            let explainer = TreeExplainer { tree, kind, x: x.row(r) };
            explainer.recurse(phi, &mut buf, 0, 0, 0, 1.0, 1.0, None);
        }
    }
    let feature_names = if e.feature_names.len() == m {
        e.feature_names.clone()
    } else {
        (0..m).map(|j| format!("f{j}")).collect()
    };
    Ok(ShapMatrix { n_rows: x.n_rows(), n_cols: m, values, base_value: base_value(e, kind), feature_names })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_abs_shap: f64,
}

/// Mean absolute attribution per source feature, largest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceVector {
    pub fn get(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.mean_abs_shap)
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.entries
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e.mean_abs_shap;
                Some(*acc)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "feature", "mean_abs_shap", "cumulative"])?;
        for (i, (e, c)) in self.entries.iter().zip(self.cumulative()).enumerate() {
            w.write_record([(i + 1).to_string(), e.feature.clone(), e.mean_abs_shap.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sums each row's attributions over the design columns of a source feature,
/// then averages the absolute sums.
pub fn importance(shap: &ShapMatrix, source_features: &[String]) -> Result<ImportanceVector> {
    if source_features.len() != shap.n_cols {
        return Err(Error::Dimension { expected: shap.n_cols, actual: source_features.len() });
    }
    if shap.n_rows == 0 {
        return Err(Error::InsufficientData("no attribution rows".into()));
    }
    let mut groups: Vec<&str> = Vec::new();
    let mut group_of = Vec::with_capacity(shap.n_cols);
    let mut index: HashMap<&str, usize> = HashMap::new();
    for name in source_features {
        if name.is_empty() {
            return Err(Error::Schema("design column without a source feature".into()));
        }
        let g = *index.entry(name.as_str()).or_insert_with(|| {
            groups.push(name.as_str());
            groups.len() - 1
        });
        group_of.push(g);
    }
    let mut totals = vec![0.0; groups.len()];
    let mut row_sums = vec![0.0; groups.len()];
    for r in 0..shap.n_rows {
        row_sums.iter_mut().for_each(|v| *v = 0.0);
        for (v, &g) in shap.row(r).iter().zip(&group_of) {
            row_sums[g] += v;
        }
        for (t, s) in totals.iter_mut().zip(&row_sums) {
            *t += s.abs();
        }
    }
    let mut entries: Vec<ImportanceEntry> = groups
        .iter()
        .zip(totals)
        .map(|(f, t)| ImportanceEntry { feature: f.to_string(), mean_abs_shap: t / shap.n_rows as f64 })
        .collect();
    entries.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap).then_with(|| a.feature.cmp(&b.feature)));
    Ok(ImportanceVector { entries })
}

/// Pearson correlation over the features both vectors share.
pub fn importance_correlation(a: &ImportanceVector, b: &ImportanceVector) -> Result<f64> {
    // Name order makes the result independent of argument order, bit for bit.
    let am: BTreeMap<&str, f64> = a.entries.iter().map(|e| (e.feature.as_str(), e.mean_abs_shap)).collect();
    let bm: BTreeMap<&str, f64> = b.entries.iter().map(|e| (e.feature.as_str(), e.mean_abs_shap)).collect();
    let pairs: Vec<(f64, f64)> = am.iter().filter_map(|(k, &x)| bm.get(k).map(|&y| (x, y))).collect();
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} shared features, need at least 3", pairs.len())));
    }
    let n = pairs.len() as f64;
    let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("importance vector has zero variance".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
