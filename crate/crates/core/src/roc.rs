use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twostage::{e_step_weights_2stage, TwoStageData, TwoStageParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ascending thresholds; a subject is flagged when `risk > cutoff`.
    pub cutoffs: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

/// Operating point of a fixed binary recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tpr: f64,
    pub fpr: f64,
    pub auc: f64,
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_cutoffs() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// A grid that visits every distinct operating point of `risk`: one value
/// below all scores followed by each unique score.
pub fn exact_cutoffs(risk: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = risk.iter().copied().filter(|r| r.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let low = v.first().map_or(-1.0, |m| m.min(0.0) - 1.0);
    let mut out = vec![low];
    out.extend(v);
    out
}

fn trapezoid_auc(fpr: &[f64], tpr: &[f64]) -> f64 {
    // Ascending cutoffs give descending rates; walk the grid backwards.
    let n = fpr.len();
    let mut area = 0.0;
    for i in (1..n).rev() {
        let (x0, x1) = (fpr[i], fpr[i - 1]);
        area += (x1 - x0) * (tpr[i] + tpr[i - 1]) / 2.0;
    }
    area
}

fn check_grid(cutoffs: &[f64]) -> Result<()> {
    if cutoffs.len() < 2 {
        return Err(Error::invalid("at least two cutoffs are required"));
    }
    if cutoffs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("cutoffs must be strictly increasing"));
    }
    Ok(())
}

/// ROC curve where class membership is replaced by posterior class weights
/// `w[i] = (P(Y=1 | data), P(Y=2 | data))`.
pub fn adjusted_roc(risk: &[f64], w: &[[f64; 2]], cutoffs: &[f64]) -> Result<RocCurve> {
    if risk.len() != w.len() {
        return Err(Error::dim("weight rows", risk.len(), w.len()));
    }
    check_grid(cutoffs)?;
    for (i, row) in w.iter().enumerate() {
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (row[0] + row[1] - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("weight row {i} is not a probability pair")));
        }
    }
    let pos: f64 = w.iter().map(|r| r[0]).sum();
    let neg: f64 = w.iter().map(|r| r[1]).sum();
    if pos <= 0.0 || neg <= 0.0 {
        return Err(Error::invalid("weights give zero mass to one class"));
    }
    let mut tpr = Vec::with_capacity(cutoffs.len());
    let mut fpr = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (r, wi) in risk.iter().zip(w) {
            if *r > c {
                tp += wi[0];
                fp += wi[1];
            }
        }
        tpr.push(tp / pos);
        fpr.push(fp / neg);
    }
    let auc = trapezoid_auc(&fpr, &tpr);
    Ok(RocCurve {
        cutoffs: cutoffs.to_vec(),
        tpr,
        fpr,
        auc,
    })
}

/// Empirical ROC on a labelled subset (`labels` are 1 for events, 0 otherwise).
pub fn subset_roc(risk: &[f64], labels: &[u8], cutoffs: &[f64]) -> Result<RocCurve> {
    if risk.len() != labels.len() {
        return Err(Error::dim("labels", risk.len(), labels.len()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("subset labels must be 0 or 1"));
    }
    let has_pos = labels.contains(&1);
    let has_neg = labels.contains(&0);
    if !(has_pos && has_neg) {
        return Err(Error::invalid("subset labels contain a single class"));
    }
    let w: Vec<[f64; 2]> = labels.iter().map(|&l| if l == 1 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    adjusted_roc(risk, &w, cutoffs)
}

/// TPR/FPR of a 0/1 recommendation, with the AUC of that two-point classifier.
pub fn recommendation_point(recommendation: &[u8], labels: &[u8]) -> Result<RocPoint> {
    let score: Vec<f64> = recommendation.iter().map(|&r| r as f64).collect();
    let curve = subset_roc(&score, labels, &[-1.0, 0.5, 2.0])?;
    Ok(RocPoint {
        tpr: curve.tpr[1],
        fpr: curve.fpr[1],
        auc: curve.auc,
    })
}

/// Posterior latent-class probabilities for two-stage data.
pub fn predictive_prob_2stage(params: &TwoStageParams, data: &TwoStageData) -> Result<Vec<[f64; 2]>> {
    e_step_weights_2stage(params, data)
}
