use super::em::{mediation_rows, MediationFit};
use super::{single_part, MediationData, MediationParams, OutcomeDist};
use crate::design::DesignMatrix;
use crate::em::EmOptions;
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_linear, fit_weighted_logistic, fit_weighted_logistic_from, fit_weighted_poisson_from, GlmOptions};
use crate::report::FitReport;
use crate::single::{compute_pistar, em_fit};

#[derive(Debug, Clone, PartialEq)]
pub struct PvwWeights {
    pub ppv: Vec<f64>,
    pub npv: Vec<f64>,
    /// Weights of the `M = 1` copy of every subject, then of the `M = 0` copy.
    pub stacked: Vec<f64>,
    /// Number of predictive values pulled back into `[0, 1]`.
    pub clamped: usize,
}

/// `(PPV, NPV)` from sensitivity, specificity and `p = P(M* = 1 | Y, X, C)`.
/// Values are not clamped.
pub fn predictive_values(sens: f64, spec: f64, p: f64) -> (f64, f64) {
    let a = (spec - 1.0) * (p - 1.0) / (spec * p);
    let b = (sens - 1.0) * p / (sens * (p - 1.0));
    let den = b * a - 1.0;
    ((a - 1.0) / den, (b - 1.0) / den)
}

/// `[Y, X, C...]` plus every pairwise product, behind an intercept.
fn observed_mediator_design(data: &MediationData) -> Result<DesignMatrix> {
    let mut vars = vec![data.y.clone(), data.x.clone()];
    vars.extend(data.c.iter().cloned());
    let mut cols = vars.clone();
    for a in 0..vars.len() {
        for b in a + 1..vars.len() {
            cols.push(vars[a].iter().zip(&vars[b]).map(|(u, v)| u * v).collect());
        }
    }
    DesignMatrix::from_columns(data.n(), &cols)
}

pub(crate) fn pvw_weights(data: &MediationData, gamma: &[Vec<f64>; 2]) -> Result<PvwWeights> {
    let acc = compute_pistar(gamma, &data.z)?;
    let design = observed_mediator_design(data)?;
    let ones = vec![1.0; data.n()];
    let fit = fit_weighted_logistic(&design, &data.mstar_indicator(), &ones)?;
    let eta = design.linear_predictor(&fit.coefficients)?;
    let mut clamped = 0;
    let mut clamp = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            v
        } else {
            clamped += 1;
            if v.is_nan() {
                0.5
            } else {
                v.clamp(0.0, 1.0)
            }
        }
    };
    let n = data.n();
    let (mut ppv, mut npv) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, e) in eta.iter().enumerate() {
        let p = crate::math::expit(*e);
        let (pp, np) = predictive_values(acc.probs[i][0][0], acc.probs[i][1][1], p);
        ppv.push(clamp(pp));
        npv.push(clamp(np));
    }
    if clamped > 0 {
        log::warn!("{clamped} predictive values fell outside [0, 1] and were clamped");
    }
    let mut stacked = vec![0.0; 2 * n];
    for i in 0..n {
        let (w1, w0) = if data.mstar[i] == 1 {
            (ppv[i], 1.0 - ppv[i])
        } else {
            (1.0 - npv[i], npv[i])
        };
        stacked[i] = w1;
        stacked[n + i] = w0;
    }
    Ok(PvwWeights {
        ppv,
        npv,
        stacked,
        clamped,
    })
}

/// Predictive value weighting: mediator accuracy from a single-outcome EM
/// fit, then a weighted outcome regression on the duplicated data.
pub fn pvw_fit(
    data: &MediationData,
    start: Option<&MediationParams>,
    dist: OutcomeDist,
    interaction: bool,
    opts: &EmOptions,
) -> Result<MediationFit> {
    data.check_outcome(dist)?;
    let single = data.as_single();
    let first = em_fit(&single, start.map(single_part).as_ref(), &EmOptions { compute_se: false, ..*opts })?;
    let weights = pvw_weights(data, &first.params.gamma)?;
    let stacked = data.stacked_outcome_design(interaction);
    let mut y = data.y.clone();
    y.extend_from_slice(&data.y);
    let theta_start = start.filter(|s| s.interaction == interaction).map(|s| s.theta.as_slice());
    let (theta, sigma, glm_ok) = match dist {
        OutcomeDist::Normal => {
            let fit = fit_weighted_linear(&stacked, &y, &weights.stacked)?;
            (fit.fit.coefficients, Some(fit.sigma.max(1e-12)), true)
        }
        OutcomeDist::Bernoulli => {
            let f = fit_weighted_logistic_from(&stacked, &y, &weights.stacked, theta_start, GlmOptions::default())?;
            (f.coefficients, None, f.converged)
        }
        OutcomeDist::Poisson => {
            let f = fit_weighted_poisson_from(&stacked, &y, &weights.stacked, theta_start, GlmOptions::default())?;
            (f.coefficients, None, f.converged)
        }
    };
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("weighted outcome fit produced non-finite estimates".into()));
    }
    let params = MediationParams {
        beta: first.params.beta.clone(),
        gamma: first.params.gamma.clone(),
        theta,
        sigma,
        dist,
        interaction,
    };
    let converged = first.report.converged && glm_ok;
    let mut report = FitReport::new("comma-pvw");
    mediation_rows(&mut report, &params, &[], Some(converged));
    report.converged = converged;
    report.iterations = first.report.iterations;
    report.label_correction_applied = first.report.label_correction_applied;
    report.sensitivity = first.report.sensitivity;
    report.specificity = first.report.specificity;
    Ok(MediationFit {
        params,
        report,
        loglik_path: first.loglik_path,
    })
}
