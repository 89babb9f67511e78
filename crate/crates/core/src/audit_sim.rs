//! Audit prioritization: rank tasks by predicted error probability and
//! measure how fast audits catch errors compared with random sampling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRanking {
    pub task_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub is_error: Vec<bool>,
}

/// Orders tasks by descending score; equal scores fall back to task id.
pub fn rank_for_audit(scores: &[f64], task_ids: &[String], is_error: &[bool]) -> Result<AuditRanking> {
    if scores.len() != task_ids.len() || scores.len() != is_error.len() {
        return Err(Error::Dimension { expected: task_ids.len(), actual: scores.len().max(is_error.len()) });
    }
    if scores.is_empty() {
        return Err(Error::InsufficientData("nothing to rank".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Degenerate("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| task_ids[a].cmp(&task_ids[b])));
    Ok(AuditRanking {
        task_ids: order.iter().map(|&i| task_ids[i].clone()).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
        is_error: order.iter().map(|&i| is_error[i]).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCurves {
    /// Errors caught among the first k audits, for k = 1..=N.
    pub caught: Vec<usize>,
    pub flip_rate: Vec<f64>,
    pub coverage: Vec<f64>,
    pub total_errors: usize,
    pub random_baseline_rate: f64,
}

impl AuditCurves {
    pub fn n(&self) -> usize {
        self.caught.len()
    }

    /// Rectangle-rule area under the coverage curve, normalised to [0, 1].
    pub fn coverage_area(&self) -> f64 {
        self.coverage.iter().sum::<f64>() / self.n() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "flip_rate", "coverage", "random_coverage"])?;
        let n = self.n() as f64;
        for k in 0..self.n() {
            w.write_record([
                (k + 1).to_string(),
                self.flip_rate[k].to_string(),
                self.coverage[k].to_string(),
                ((k + 1) as f64 / n).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn compute_curves(ranking: &AuditRanking) -> Result<AuditCurves> {
    let n = ranking.is_error.len();
    let total_errors = ranking.is_error.iter().filter(|&&e| e).count();
    if total_errors == 0 || total_errors == n {
        return Err(Error::Degenerate(format!("{total_errors} errors among {n} tasks")));
    }
    let caught: Vec<usize> = ranking
        .is_error
        .iter()
        .scan(0usize, |acc, &e| {
            *acc += e as usize;
            Some(*acc)
        })
        .collect();
    let flip_rate = caught.iter().enumerate().map(|(k, &c)| c as f64 / (k + 1) as f64).collect();
    let coverage = caught.iter().map(|&c| c as f64 / total_errors as f64).collect();
    Ok(AuditCurves {
        caught,
        flip_rate,
        coverage,
        total_errors,
        random_baseline_rate: total_errors as f64 / n as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyGain {
    pub target_coverage: f64,
    pub k_model: usize,
    pub k_random: usize,
    pub gain: f64,
}

/// Audits needed to reach `target` coverage by ranking versus the random
/// expectation `ceil(target * N)`.
pub fn efficiency_gain(curves: &AuditCurves, target: f64) -> Result<EfficiencyGain> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidConfig(format!("target coverage {target} outside (0, 1]")));
    }
    let k_model = curves
        .coverage
        .iter()
        .position(|&c| c >= target)
        .map(|i| i + 1)
        .ok_or_else(|| Error::Degenerate("target coverage unreachable".into()))?;
    let k_random = ((target * curves.n() as f64).ceil() as usize).max(1);
    Ok(EfficiencyGain { target_coverage: target, k_model, k_random, gain: 1.0 - k_model as f64 / k_random as f64 })
}

/// Error rate among the first k audits relative to the overall rate.
pub fn early_lift(curves: &AuditCurves, k: usize) -> Result<f64> {
    if k == 0 || k > curves.n() {
        return Err(Error::InvalidConfig(format!("k={k} outside 1..={}", curves.n())));
    }
    if curves.random_baseline_rate == 0.0 {
        return Err(Error::Degenerate("zero baseline error rate".into()));
    }
    Ok(curves.flip_rate[k - 1] / curves.random_baseline_rate)
}
