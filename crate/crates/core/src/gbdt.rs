//! Second-order gradient-boosted trees with logistic loss.
//!
//! Split search is exact greedy over presorted columns, grown level by level.
//! Each column keeps its most frequent value implicit: only rows holding other
//! values are scanned, and the frequent bin's statistics come by subtraction.
//! This keeps one-hot and heavily imputed columns cheap.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::{logit, sigmoid};

/// Floor on per-row hessians so saturated rows never yield zero covers.
const MIN_HESSIAN: f64 = 1e-16;
const INACTIVE: u32 = u32::MAX;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Dimension { expected: n_rows * n_cols, actual: data.len() });
        }
        Ok(Self { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::Dimension { expected: n_cols, actual: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n_rows: rows.len(), n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn select_rows(&self, rows: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix { n_rows: rows.len(), n_cols: self.n_cols, data }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub base_score: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 6,
            min_child_weight: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            learning_rate: 0.3,
            l2_lambda: 1.0,
            base_score: 0.5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(0.0..f64::INFINITY).contains(&self.min_child_weight) {
            return bad("min_child_weight must be a non-negative number");
        }
        if !(0.0..f64::INFINITY).contains(&self.gamma) {
            return bad("gamma must be a non-negative number");
        }
        if !(0.0..f64::INFINITY).contains(&self.l2_lambda) {
            return bad("l2_lambda must be a non-negative number");
        }
        for (name, v) in [
            ("subsample", self.subsample),
            ("colsample_bytree", self.colsample_bytree),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad("base_score must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
    Leaf { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Training hessian sum reaching the node.
    pub cover: f64,
    /// Training gradient sum reaching the node.
    pub grad: f64,
    pub n_rows: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
}

/// A tree stored as a flat node list with the root at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i].kind {
                NodeKind::Leaf { .. } => return i,
                NodeKind::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)].kind {
            NodeKind::Leaf { weight } => weight,
            NodeKind::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub base_margin: f64,
    pub hyperparams: Hyperparams,
    pub n_features: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

pub fn logistic_grad_hess(p: f64, y: bool) -> (f64, f64) {
    (p - if y { 1.0 } else { 0.0 }, p * (1.0 - p))
}

pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64, eta: f64) -> f64 {
    let w = eta * (-g / (h + lambda));
    // 0/0 can only arise with lambda = 0 and an empty hessian.
    if w.is_finite() {
        w
    } else {
        0.0
    }
}

/// Mean logistic loss of margins against labels.
pub fn log_loss(margins: &[f64], y: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            // log(1 + e^m) − t·m, computed stably
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - if t { m } else { 0.0 }
        })
        .sum();
    total / margins.len().max(1) as f64
}

/// Column presorted into distinct values, with the most frequent value implicit.
#[derive(Clone)]
struct SortedColumn {
    values: Vec<f64>,
    dominant: u32,
    /// (row, bin) for bins below the dominant one, ascending by bin then row.
    below: Vec<(u32, u32)>,
    above: Vec<(u32, u32)>,
}

impl SortedColumn {
    fn build(x: &DenseMatrix, j: usize) -> Self {
        let mut order: Vec<(f64, u32)> = (0..x.n_rows()).map(|r| (x.get(r, j), r as u32)).collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut bins = Vec::with_capacity(order.len());
        for &(v, r) in &order {
            if values.last() != Some(&v) {
                values.push(v);
                counts.push(0);
            }
            *counts.last_mut().unwrap() += 1;
            bins.push((r, values.len() as u32 - 1));
        }
        let dominant = counts
            .iter()
            .enumerate()
            .fold((0usize, 0usize), |best, (i, &c)| if c > best.1 { (i, c) } else { best })
            .0 as u32;
        let below = bins.iter().copied().filter(|&(_, b)| b < dominant).collect();
        let above = bins.iter().copied().filter(|&(_, b)| b > dominant).collect();
        Self { values, dominant, below, above }
    }

    fn retain_active(&mut self, slot: &[u32]) {
        self.below.retain(|&(r, _)| slot[r as usize] != INACTIVE);
        self.above.retain(|&(r, _)| slot[r as usize] != INACTIVE);
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if a < t && t <= b {
        t
    } else {
        b
    }
}

#[derive(Clone, Copy, Debug)]
struct NodeStats {
    g: f64,
    h: f64,
    n: u32,
}

/// Best split seen so far for one node. `score` is the child part of the
/// gain, enough for ranking within the node; bins index the column values.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    score: f64,
    feature: usize,
    lo: u32,
    hi: u32,
    left: NodeStats,
}

/// Running sums for one node during a column scan; `last` is the latest bin seen.
#[derive(Clone, Copy)]
struct Acc {
    g: f64,
    h: f64,
    n: u32,
    last: u32,
}

const EMPTY_ACC: Acc = Acc { g: 0.0, h: 0.0, n: 0, last: INACTIVE };

struct SplitContext<'a> {
    gh: &'a [[f64; 2]],
    slot: &'a [u32],
    active: &'a [NodeStats],
    lambda: f64,
    min_child_weight: f64,
}

/// Per-node running best; `score` mirrors `candidate` for a cheap first test.
struct Best {
    score: Vec<f64>,
    candidate: Vec<Option<Candidate>>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self { score: vec![f64::NEG_INFINITY; k], candidate: vec![None; k] }
    }

    /// Called only when `score` is at least the running best. Equal scores
    /// keep the earlier feature, then the lower threshold.
    #[cold]
    fn record(&mut self, s: usize, score: f64, feature: usize, lo: u32, hi: u32, left: NodeStats) {
        let take = match self.candidate[s] {
            None => true,
            Some(b) => score > b.score || (b.feature == feature && lo < b.lo),
        };
        if take {
            self.score[s] = score;
            self.candidate[s] = Some(Candidate { score, feature, lo, hi, left });
        }
    }
}

impl SplitContext<'_> {
    /// Child part of the split gain, or NaN when a child is too light. NaN
    /// never passes the `>=` test against the running best.
    #[inline(always)]
    fn score(&self, node: NodeStats, lg: f64, lh: f64) -> f64 {
        let (gr, hr) = (node.g - lg, node.h - lh);
        let score = lg * lg / (lh + self.lambda) + gr * gr / (hr + self.lambda);
        if lh >= self.min_child_weight && hr >= self.min_child_weight {
            score
        } else {
            f64::NAN
        }
    }

    /// One pass per stored entry: bins above the dominant one are scanned
    /// downwards as right-hand suffixes, bins below upwards as left prefixes,
    /// and splits next to the dominant bin are closed off afterwards. Scores
    /// are computed for every entry and masked, which keeps the hot loop free
    /// of unpredictable branches.
    fn find_splits(&self, col: &SortedColumn, feature: usize, best: &mut Best) {
        let k = self.active.len();
        let mut right = vec![EMPTY_ACC; k];
        for &(r, b) in col.above.iter().rev() {
            let s = self.slot[r as usize];
            if s == INACTIVE {
                continue;
            }
            let s = s as usize;
            let acc = &mut right[s];
            let node = self.active[s];
            let fresh = acc.last != b && acc.last != INACTIVE;
            let score = self.score(node, node.g - acc.g, node.h - acc.h);
            let score = if fresh { score } else { f64::NAN };
            if score >= best.score[s] {
                let left = NodeStats { g: node.g - acc.g, h: node.h - acc.h, n: node.n - acc.n };
                best.record(s, score, feature, b, acc.last, left);
            }
            acc.last = b;
            let [g, h] = self.gh[r as usize];
            acc.g += g;
            acc.h += h;
            acc.n += 1;
        }
        let mut left = vec![EMPTY_ACC; k];
        for &(r, b) in &col.below {
            let s = self.slot[r as usize];
            if s == INACTIVE {
                continue;
            }
            let s = s as usize;
            let acc = &mut left[s];
            let fresh = acc.last != b && acc.last != INACTIVE;
            let score = self.score(self.active[s], acc.g, acc.h);
            let score = if fresh { score } else { f64::NAN };
            if score >= best.score[s] {
                best.record(s, score, feature, acc.last, b, NodeStats { g: acc.g, h: acc.h, n: acc.n });
            }
            acc.last = b;
            let [g, h] = self.gh[r as usize];
            acc.g += g;
            acc.h += h;
            acc.n += 1;
        }
        let dom = col.dominant;
        for s in 0..k {
            let node = self.active[s];
            let (l, r) = (left[s], right[s]);
            let below = NodeStats { g: l.g, h: l.h, n: l.n };
            let below_and_dominant = NodeStats { g: node.g - r.g, h: node.h - r.h, n: node.n - r.n };
            let mut offer = |lo: u32, hi: u32, left: NodeStats| {
                let score = self.score(node, left.g, left.h);
                if score >= best.score[s] {
                    best.record(s, score, feature, lo, hi, left);
                }
            };
            if node.n - l.n - r.n > 0 {
                if l.last != INACTIVE {
                    offer(l.last, dom, below);
                }
                if r.last != INACTIVE {
                    offer(dom, r.last, below_and_dominant);
                }
            } else if l.last != INACTIVE && r.last != INACTIVE {
                offer(l.last, r.last, below);
            }
        }
    }
}

/// Design matrix with every column presorted once, reusable across fits.
pub struct PreparedMatrix<'a> {
    x: &'a DenseMatrix,
    columns: Vec<SortedColumn>,
}

impl<'a> PreparedMatrix<'a> {
    pub fn new(x: &'a DenseMatrix) -> Result<Self> {
        if x.n_rows() == 0 {
            return Err(Error::InsufficientData("cannot train on zero rows".into()));
        }
        if x.n_rows() >= INACTIVE as usize {
            return Err(Error::InvalidConfig("too many rows".into()));
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("design matrix contains non-finite values".into()));
        }
        let columns = (0..x.n_cols()).map(|j| SortedColumn::build(x, j)).collect();
        Ok(Self { x, columns })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        self.x
    }
}

pub fn train(x: &DenseMatrix, y: &[bool], hp: &Hyperparams) -> Result<Ensemble> {
    hp.validate()?;
    train_prepared(&PreparedMatrix::new(x)?, y, hp, None)
}

/// Called after each boosting round with the round index and the training margins.
pub type RoundObserver<'a> = &'a mut dyn FnMut(usize, &[f64]);

/// Fits an ensemble; an observer, if given, sees the training margins after each round.
pub fn train_prepared(
    data: &PreparedMatrix<'_>,
    y: &[bool],
    hp: &Hyperparams,
    mut observer: Option<RoundObserver<'_>>,
) -> Result<Ensemble> {
    hp.validate()?;
    let x = data.x;
    let n = x.n_rows();
    let m = x.n_cols();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, actual: y.len() });
    }
    let base_margin = logit(hp.base_score);
    let mut margins = vec![base_margin; n];
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let n_sample = ((hp.subsample * n as f64).round() as usize).clamp(1, n);
    let n_features = ((hp.colsample_bytree * m as f64).round() as usize).max(1).min(m);
    let mut gh = vec![[0.0; 2]; n];
    let mut trees = Vec::with_capacity(hp.n_estimators);

    for round in 0..hp.n_estimators {
        for i in 0..n {
            let (g, h) = logistic_grad_hess(sigmoid(margins[i]), y[i]);
            gh[i] = [g, h.max(MIN_HESSIAN)];
        }
        let rows: Vec<usize> = if n_sample == n {
            (0..n).collect()
        } else {
            let mut r = sample(&mut rng, n, n_sample).into_vec();
            r.sort_unstable();
            r
        };
        let features: Vec<usize> = if n_features == m {
            (0..m).collect()
        } else {
            let mut f = sample(&mut rng, m, n_features).into_vec();
            f.sort_unstable();
            f
        };
        let tree = grow_tree(data, &features, &rows, &gh, hp);
        for (i, margin) in margins.iter_mut().enumerate() {
            *margin += tree.predict(x.row(i));
        }
        trees.push(tree);
        if let Some(obs) = observer.as_mut() {
            obs(round, &margins);
        }
    }
    Ok(Ensemble { trees, base_margin, hyperparams: hp.clone(), n_features: m, feature_names: Vec::new() })
}

fn grow_tree(data: &PreparedMatrix<'_>, features: &[usize], rows: &[usize], gh: &[[f64; 2]], hp: &Hyperparams) -> Tree {
    let x = data.x;
    let n = x.n_rows();
    let mut slot = vec![INACTIVE; n];
    let mut root = NodeStats { g: 0.0, h: 0.0, n: 0 };
    for &r in rows {
        slot[r] = 0;
        root.g += gh[r][0];
        root.h += gh[r][1];
        root.n += 1;
    }
    let mut nodes = vec![Node { cover: root.h, grad: root.g, n_rows: root.n as usize, kind: NodeKind::Leaf { weight: 0.0 } }];
    let mut active: Vec<(usize, NodeStats)> = vec![(0, root)];
    // Working copies shrink as rows settle into leaves or fall outside the sample.
    let mut work: Option<Vec<SortedColumn>> = None;
    let mut live_rows = rows.len();
    let mut stored_rows = n;

    for _depth in 0..hp.max_depth {
        if active.is_empty() {
            break;
        }
        if live_rows * 10 < stored_rows * 6 {
            let mut w: Vec<SortedColumn> = match work.take() {
                Some(w) => w,
                None => features.iter().map(|&f| data.columns[f].clone()).collect(),
            };
            for c in &mut w {
                c.retain_active(&slot);
            }
            stored_rows = live_rows;
            work = Some(w);
        }
        let stats: Vec<NodeStats> = active.iter().map(|a| a.1).collect();
        let ctx = SplitContext {
            gh,
            slot: &slot,
            active: &stats,
            lambda: hp.l2_lambda,
            min_child_weight: hp.min_child_weight,
        };
        let mut best = Best::new(active.len());
        for (k, &f) in features.iter().enumerate() {
            let col = match &work {
                Some(w) => &w[k],
                None => &data.columns[f],
            };
            ctx.find_splits(col, f, &mut best);
        }

        // Per active slot: (feature, threshold, left slot, right slot) when split.
        let mut routes: Vec<Option<(usize, f64, u32, u32)>> = vec![None; active.len()];
        let mut next: Vec<(usize, NodeStats)> = Vec::new();
        for (s, &(node_id, st)) in active.iter().enumerate() {
            let accepted = best.candidate[s].and_then(|c| {
                let right = NodeStats { g: st.g - c.left.g, h: st.h - c.left.h, n: st.n - c.left.n };
                let gain = split_gain(c.left.g, c.left.h, right.g, right.h, hp.l2_lambda, hp.gamma);
                (gain > 0.0).then_some((c, right, gain))
            });
            match accepted {
                Some((c, right, gain)) => {
                    let left = c.left;
                    let values = &data.columns[c.feature].values;
                    let threshold = midpoint(values[c.lo as usize], values[c.hi as usize]);
                    let li = nodes.len();
                    for child in [left, right] {
                        nodes.push(Node {
                            cover: child.h,
                            grad: child.g,
                            n_rows: child.n as usize,
                            kind: NodeKind::Leaf { weight: 0.0 },
                        });
                    }
                    nodes[node_id].kind =
                        NodeKind::Split { feature: c.feature, threshold, left: li, right: li + 1, gain };
                    routes[s] = Some((c.feature, threshold, next.len() as u32, next.len() as u32 + 1));
                    next.push((li, left));
                    next.push((li + 1, right));
                }
                None => {
                    nodes[node_id].kind = NodeKind::Leaf { weight: leaf_weight(st.g, st.h, hp.l2_lambda, hp.learning_rate) };
                }
            }
        }
        live_rows = 0;
        for (r, sl) in slot.iter_mut().enumerate() {
            if *sl == INACTIVE {
                continue;
            }
            *sl = match routes[*sl as usize] {
                Some((f, thr, l, rt)) => {
                    live_rows += 1;
                    if x.get(r, f) < thr {
                        l
                    } else {
                        rt
                    }
                }
                None => INACTIVE,
            };
        }
        active = next;
    }
    for (node_id, st) in active {
        nodes[node_id].kind = NodeKind::Leaf { weight: leaf_weight(st.g, st.h, hp.l2_lambda, hp.learning_rate) };
    }
    Tree { nodes }
}

impl Ensemble {
    fn check_dims(&self, x: &DenseMatrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::Dimension { expected: self.n_features, actual: x.n_cols() });
        }
        Ok(())
    }

    pub fn margin_row(&self, row: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_margin(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        Ok((0..x.n_rows()).map(|i| self.margin_row(x.row(i))).collect())
    }

    pub fn predict_proba(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_margin(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn grad_hess_examples() {
        assert_eq!(logistic_grad_hess(0.5, true), (-0.5, 0.25));
        assert_eq!(logistic_grad_hess(0.5, false), (0.5, 0.25));
        let (g, h) = logistic_grad_hess(0.9, true);
        assert!((g + 0.1).abs() < 1e-12 && (h - 0.09).abs() < 1e-12);
    }

    #[test]
    fn gain_and_weight_examples() {
        assert_eq!(split_gain(-2.0, 3.0, 2.0, 3.0, 1.0, 0.0), 1.0);
        assert_eq!(split_gain(0.0, 3.0, 0.0, 2.0, 1.0, 0.7), -0.7);
        assert!(split_gain(-2.0, 3.0, 2.0, 3.0, 1.0, 5.0) < 0.0);
        assert_eq!(leaf_weight(2.0, 3.0, 1.0, 1.0), -0.5);
        assert_eq!(leaf_weight(0.0, 3.0, 1.0, 1.0), 0.0);
        assert!((leaf_weight(2.0, 3.0, 1.0, 0.1) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(0.0, 1.0), 0.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a < t && t <= b);
    }

    #[test]
    fn empty_ensemble_predicts_base_score() {
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let hp = Hyperparams { n_estimators: 0, ..Default::default() };
        let e = train(&x, &[true, false], &hp).unwrap();
        assert!(e.trees.is_empty());
        assert_eq!(e.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn single_leaf_prediction() {
        let e = Ensemble {
            trees: vec![Tree { nodes: vec![Node { cover: 1.0, grad: 0.0, n_rows: 1, kind: NodeKind::Leaf { weight: 0.7 } }] }],
            base_margin: 0.0,
            hyperparams: Hyperparams::default(),
            n_features: 1,
            feature_names: vec![],
        };
        let x = DenseMatrix::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(e.predict_proba(&x).unwrap()[0], sigmoid(0.7));
        let wrong = DenseMatrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        assert!(matches!(e.predict_margin(&wrong), Err(Error::Dimension { .. })));
    }

    #[test]
    fn training_errors() {
        let x = DenseMatrix::new(0, 2, vec![]).unwrap();
        assert!(matches!(train(&x, &[], &Hyperparams::default()), Err(Error::InsufficientData(_))));
        let x = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(train(&x, &[true, false], &Hyperparams::default()), Err(Error::Dimension { .. })));
        let x = DenseMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(train(&x, &[true], &Hyperparams::default()).is_err());
        let bad = Hyperparams { subsample: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn separable_loss_decreases_each_round() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64 + 0.5]).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let hp = Hyperparams { n_estimators: 10, max_depth: 1, learning_rate: 0.3, min_child_weight: 0.0, ..Default::default() };
        let mut losses = vec![log_loss(&vec![0.0; y.len()], &y)];
        let mut obs = |_: usize, m: &[f64]| losses.push(log_loss(m, &y));
        let e = train_prepared(&PreparedMatrix::new(&x).unwrap(), &y, &hp, Some(&mut obs)).unwrap();
        assert_eq!(e.trees.len(), 10);
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
        match e.trees[0].nodes[0].kind {
            NodeKind::Split { feature: 0, threshold, .. } => assert_eq!(threshold, 0.0),
            ref k => panic!("{k:?}"),
        }
    }

    #[test]
    fn saturated_pure_node_stays_a_leaf() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let hp = Hyperparams { n_estimators: 3, base_score: 1.0 - 1e-15, min_child_weight: 0.0, ..Default::default() };
        let e = train(&x, &[true, true, true], &hp).unwrap();
        for t in &e.trees {
            assert_eq!(t.nodes.len(), 1);
        }
    }

    fn random_data(seed: u64, n: usize, m: usize) -> (DenseMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..m)
                .map(|j| if j % 2 == 0 { (rng.random_range(0..4)) as f64 } else { rng.random::<f64>() })
                .collect();
            let p = sigmoid(row[0] - 1.5 + row[m - 1]);
            y.push(rng.random::<f64>() < p);
            rows.push(row);
        }
        (DenseMatrix::from_rows(&rows).unwrap(), y)
    }

    /// Recomputes routing, covers and split gains independently of the learner.
    fn check_tree(t: &Tree, x: &DenseMatrix, grad: &[f64], hess: &[f64], hp: &Hyperparams) {
        let mut counts = vec![0usize; t.nodes.len()];
        let mut g = vec![0.0; t.nodes.len()];
        let mut h = vec![0.0; t.nodes.len()];
        for r in 0..x.n_rows() {
            let leaf = t.leaf_index(x.row(r));
            assert!(matches!(t.nodes[leaf].kind, NodeKind::Leaf { .. }));
            counts[leaf] += 1;
            g[leaf] += grad[r];
            h[leaf] += hess[r];
        }
        for (i, node) in t.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Leaf { weight } => {
                    assert!(weight.is_finite());
                    assert_eq!(counts[i], node.n_rows);
                    assert!((h[i] - node.cover).abs() < 1e-9 * (1.0 + h[i]));
                    assert!((g[i] - node.grad).abs() < 1e-9 * (1.0 + h[i]));
                }
                NodeKind::Split { left, right, gain, .. } => {
                    let (l, r) = (&t.nodes[left], &t.nodes[right]);
                    assert!((node.cover - l.cover - r.cover).abs() < 1e-9 * (1.0 + node.cover));
                    assert_eq!(node.n_rows, l.n_rows + r.n_rows);
                    let oracle = 0.5
                        * (l.grad * l.grad / (l.cover + hp.l2_lambda) + r.grad * r.grad / (r.cover + hp.l2_lambda)
                            - (l.grad + r.grad).powi(2) / (l.cover + r.cover + hp.l2_lambda))
                        - hp.gamma;
                    assert!(oracle > 0.0);
                    assert!((oracle - gain).abs() < 1e-9 * (1.0 + gain.abs()));
                    assert!(l.cover >= hp.min_child_weight && r.cover >= hp.min_child_weight);
                }
            }
        }
    }

    #[test]
    fn trees_satisfy_structural_oracle() {
        for seed in 0..5 {
            let (x, y) = random_data(seed, 300, 5);
            let hp = Hyperparams {
                n_estimators: 5,
                max_depth: 4,
                min_child_weight: 2.0,
                gamma: 0.1,
                learning_rate: 0.2,
                seed,
                ..Default::default()
            };
            let mut margins = vec![0.0; x.n_rows()];
            let e = train(&x, &y, &hp).unwrap();
            for t in &e.trees {
                let (grad, hess): (Vec<f64>, Vec<f64>) = margins
                    .iter()
                    .zip(&y)
                    .map(|(&m, &t)| {
                        let (g, h) = logistic_grad_hess(sigmoid(m), t);
                        (g, h.max(MIN_HESSIAN))
                    })
                    .unzip();
                check_tree(t, &x, &grad, &hess, &hp);
                assert!(t.depth() <= hp.max_depth);
                for (i, m) in margins.iter_mut().enumerate() {
                    *m += t.predict(x.row(i));
                }
            }
        }
    }

    /// Exhaustive best split at the root, for comparison with the learner.
    fn brute_force_root(x: &DenseMatrix, grad: &[f64], hess: &[f64], hp: &Hyperparams) -> Option<(f64, usize, f64)> {
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..x.n_cols() {
            let mut vals: Vec<f64> = (0..x.n_rows()).map(|r| x.get(r, j)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = midpoint(w[0], w[1]);
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for r in 0..x.n_rows() {
                    if x.get(r, j) < thr {
                        gl += grad[r];
                        hl += hess[r];
                    } else {
                        gr += grad[r];
                        hr += hess[r];
                    }
                }
                if hl < hp.min_child_weight || hr < hp.min_child_weight {
                    continue;
                }
                let gain = split_gain(gl, hl, gr, hr, hp.l2_lambda, hp.gamma);
                if best.is_none_or(|b| gain > b.0 + 1e-9) {
                    best = Some((gain, j, thr));
                }
            }
        }
        best.filter(|b| b.0 > 0.0)
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        for seed in 0..8 {
            let (x, y) = random_data(100 + seed, 120, 4);
            let hp = Hyperparams { n_estimators: 1, max_depth: 1, min_child_weight: 1.0, ..Default::default() };
            let grad: Vec<f64> = y.iter().map(|&t| logistic_grad_hess(0.5, t).0).collect();
            let hess = vec![0.25; y.len()];
            let e = train(&x, &y, &hp).unwrap();
            let expected = brute_force_root(&x, &grad, &hess, &hp);
            match (e.trees[0].nodes[0].kind.clone(), expected) {
                (NodeKind::Split { feature, threshold, gain, .. }, Some((g, j, t))) => {
                    assert!((gain - g).abs() < 1e-9);
                    assert_eq!((feature, threshold), (j, t));
                }
                (NodeKind::Leaf { .. }, None) => {}
                (k, e) => panic!("{k:?} vs {e:?}"),
            }
        }
    }

    #[test]
    fn deterministic_and_serializable() {
        let (x, y) = random_data(9, 200, 6);
        let hp = Hyperparams { n_estimators: 8, subsample: 0.6, colsample_bytree: 0.7, seed: 4, ..Default::default() };
        let a = train(&x, &y, &hp).unwrap();
        let b = train(&x, &y, &hp).unwrap();
        assert_eq!(a, b);
        let back = Ensemble::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.predict_margin(&x).unwrap(), a.predict_margin(&x).unwrap());
        let c = train(&x, &y, &Hyperparams { seed: 5, ..hp }).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn loss_non_increasing(seed in 0u64..1000, depth in 1usize..5, eta in 0.01f64..0.3) {
            let (x, y) = random_data(seed, 80, 3);
            let hp = Hyperparams { n_estimators: 12, max_depth: depth, learning_rate: eta, min_child_weight: 0.0, ..Default::default() };
            let mut losses = vec![log_loss(&vec![0.0; y.len()], &y)];
            let mut obs = |_: usize, m: &[f64]| losses.push(log_loss(m, &y));
            train_prepared(&PreparedMatrix::new(&x).unwrap(), &y, &hp, Some(&mut obs)).unwrap();
            for w in losses.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }

        #[test]
        fn probabilities_in_open_interval(seed in 0u64..1000) {
            let (x, y) = random_data(seed, 60, 3);
            let e = train(&x, &y, &Hyperparams { n_estimators: 5, ..Default::default() }).unwrap();
            for p in e.predict_proba(&x).unwrap() {
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }
    }
}
