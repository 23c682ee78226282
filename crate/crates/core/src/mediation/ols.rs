use nalgebra::{DMatrix, DVector};

use super::em::{mediation_rows, MediationFit};
use super::{single_part, MediationData, MediationParams, OutcomeDist};
use crate::em::EmOptions;
use crate::error::{Error, Result};
use crate::math::mean;
use crate::report::FitReport;
use crate::single::em_fit;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsSolution {
    pub theta_0: f64,
    pub theta_m: f64,
    /// Coefficients of `D = [X, C...]`.
    pub theta_d: Vec<f64>,
    pub zeta: f64,
    pub xi: f64,
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

/// Moment correction for a misclassified binary regressor `m01` (1 when
/// `M* = 1`) given average sensitivity and specificity.
pub fn ols_solve(y: &[f64], m01: &[f64], d: &[Vec<f64>], sensitivity: f64, specificity: f64) -> Result<OlsSolution> {
    let n = y.len();
    if m01.len() != n || d.iter().any(|c| c.len() != n) {
        return Err(Error::dim("OLS correction inputs", n, m01.len()));
    }
    let pi21 = 1.0 - sensitivity;
    let pi12 = 1.0 - specificity;
    let p1 = mean(m01);
    let denom = 1.0 - pi12 - pi21;
    if denom.abs() < 1e-12 || p1 <= 0.0 || p1 >= 1.0 {
        return Err(Error::Singular("OLS correction (uninformative mediator)"));
    }
    let zeta = 1.0 - (p1 - pi12) * (1.0 - pi21 - p1) / (denom * (1.0 - p1) * p1);
    let xi = (pi21 + pi12) / denom;

    let q = d.len();
    let mut a = DMatrix::zeros(q + 1, q + 1);
    let mut rhs = DVector::zeros(q + 1);
    a[(0, 0)] = (1.0 - zeta) * cov(m01, m01);
    rhs[0] = cov(y, m01);
    for r in 0..q {
        let s = cov(&d[r], m01);
        a[(0, r + 1)] = s;
        a[(r + 1, 0)] = (1.0 + xi) * s;
        rhs[r + 1] = cov(y, &d[r]);
        for c in 0..q {
            a[(r + 1, c + 1)] = cov(&d[r], &d[c]);
        }
    }
    let sol = a.lu().solve(&rhs).ok_or(Error::Singular("OLS correction system"))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("OLS correction system"));
    }
    let theta_m = sol[0];
    let theta_d: Vec<f64> = sol.iter().skip(1).copied().collect();
    let theta_0 = mean(y) - theta_m * (p1 - pi12) / denom
        - d.iter().zip(&theta_d).map(|(col, t)| mean(col) * t).sum::<f64>();
    Ok(OlsSolution {
        theta_0,
        theta_m,
        theta_d,
        zeta,
        xi,
    })
}

/// OLS correction for a continuous outcome. Interactions are not supported.
pub fn ols_correct(
    data: &MediationData,
    start: Option<&MediationParams>,
    interaction: bool,
    opts: &EmOptions,
) -> Result<MediationFit> {
    if interaction {
        return Err(Error::Unsupported(
            "the OLS correction cannot estimate an exposure-mediator interaction".into(),
        ));
    }
    if start.is_some_and(|s| s.dist != OutcomeDist::Normal) {
        return Err(Error::Unsupported("the OLS correction needs a continuous outcome".into()));
    }
    let single = data.as_single();
    let first = em_fit(&single, start.map(single_part).as_ref(), &EmOptions { compute_se: false, ..*opts })?;
    let sens = first.report.sensitivity.expect("set by em_fit");
    let spec = first.report.specificity.expect("set by em_fit");
    let mut d = vec![data.x.clone()];
    d.extend(data.c.iter().cloned());
    let sol = ols_solve(&data.y, &data.mstar_indicator(), &d, sens, spec)?;
    let mut theta = vec![sol.theta_0, sol.theta_d[0], sol.theta_m];
    theta.extend_from_slice(&sol.theta_d[1..]);
    let params = MediationParams {
        beta: first.params.beta.clone(),
        gamma: first.params.gamma.clone(),
        theta,
        sigma: None,
        dist: OutcomeDist::Normal,
        interaction: false,
    };
    let mut report = FitReport::new("comma-ols");
    mediation_rows(&mut report, &params, &[], Some(first.report.converged));
    report.converged = first.report.converged;
    report.iterations = first.report.iterations;
    report.label_correction_applied = first.report.label_correction_applied;
    report.sensitivity = Some(sens);
    report.specificity = Some(spec);
    Ok(MediationFit {
        params,
        report,
        loglik_path: first.loglik_path,
    })
}
