//! Weighted GLM fitting (logistic, linear, Poisson) used by every M-step.
//!
//! Logistic and Poisson fits use iteratively reweighted least squares with
//! step halving, so each accepted iterate never increases the weighted
//! deviance. Every least-squares solve goes through a Householder QR of the
//! row-scaled design.

use nalgebra::{DMatrix, DVector};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::{clamp_eta, expit, ETA_CAP};

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Relative deviance change that counts as converged.
    pub tolerance: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            max_iter: 25,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub coef_covariance: DMatrix<f64>,
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Some fitted linear predictor reached the `±30` cap.
    pub separated: bool,
}

impl GlmFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|j| self.coef_covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub fit: GlmFit,
    /// `sqrt(sum w r^2 / sum w)`.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Logistic,
    Poisson,
}

impl Family {
    fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Logistic => expit(eta),
            Family::Poisson => clamp_eta(eta).exp(),
        }
    }

    /// d mu / d eta, which for both canonical links equals the variance.
    fn mu_eta(self, mu: f64) -> f64 {
        match self {
            Family::Logistic => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Logistic => 2.0 * (xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu))),
            Family::Poisson => 2.0 * (xlogy(y, y / mu) - (y - mu)),
        }
    }

    fn initial_mean(self, y: f64, w: f64) -> f64 {
        match self {
            Family::Logistic => (w * y + 0.5) / (w + 1.0),
            Family::Poisson => y + 0.1,
        }
    }

    fn link(self, mu: f64) -> f64 {
        match self {
            Family::Logistic => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
        }
    }
}

#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn check_inputs(x: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<()> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::dim("glm response", n, y.len()));
    }
    if w.len() != n {
        return Err(Error::dim("glm weights", n, w.len()));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("glm weights must be finite and non-negative"));
    }
    if !w.iter().any(|&v| v > 0.0) {
        return Err(Error::invalid("glm needs at least one positive weight"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("glm response contains non-finite values"));
    }
    Ok(())
}

/// Solves `min sum omega_i (z_i - x_i b)^2` and returns `b` together with
/// `(X' Omega X)^{-1}`.
fn weighted_lstsq(x: &DMatrix<f64>, z: &[f64], omega: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = x.shape();
    let active = omega.iter().filter(|&&o| o > 0.0).count();
    if active < p {
        return Err(Error::RankDeficient);
    }
    let mut a = x.clone();
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        let s = omega[i].sqrt();
        a.row_mut(i).scale_mut(s);
        rhs[i] = s * z[i];
    }
    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * max_diag) {
        return Err(Error::RankDeficient);
    }
    qr.q_tr_mul(&mut rhs);
    let head = rhs.rows(0, p).into_owned();
    let coef = r
        .solve_upper_triangular(&head)
        .ok_or(Error::RankDeficient)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient)?;
    let cov = &r_inv * r_inv.transpose();
    Ok((coef, symmetrize(cov)))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn deviance(family: Family, eta: &[f64], y: &[f64], w: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|((&e, &yi), &wi)| wi * family.unit_deviance(yi, family.mean(e)))
        .sum()
}

fn irls(
    family: Family,
    x: &DesignMatrix,
    y: &[f64],
    w: &[f64],
    start: Option<&[f64]>,
    opts: GlmOptions,
) -> Result<GlmFit> {
    check_inputs(x, y, w)?;
    let n = x.nrows();
    let p = x.ncols();
    let xm = x.matrix();

    let mut z = vec![0.0; n];
    let mut omega = vec![0.0; n];

    let (mut coef, mut eta) = match start {
        Some(s) => {
            let eta = x.linear_predictor(s)?;
            (DVector::from_column_slice(s), eta)
        }
        None => {
            // First pass from the data-based starting means, as glm() does.
            for i in 0..n {
                let mu = family.initial_mean(y[i], w[i]);
                let eta0 = family.link(mu);
                let d = family.mu_eta(mu);
                z[i] = eta0 + (y[i] - mu) / d;
                omega[i] = w[i] * d;
            }
            let (b, _) = weighted_lstsq(xm, &z, &omega)?;
            let eta = (xm * &b).as_slice().to_vec();
            (b, eta)
        }
    };
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("glm start contains non-finite values"));
    }

    let mut dev = deviance(family, &eta, y, w);
    // Scaled by the mean weight so the stopping rule ignores the weight scale.
    let dev_floor = 0.1 * w.iter().sum::<f64>() / n.max(1) as f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = 0.0f64;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        for i in 0..n {
            let mu = family.mean(eta[i]);
            let d = family.mu_eta(mu).max(f64::MIN_POSITIVE);
            z[i] = clamp_eta(eta[i]) + (y[i] - mu) / d;
            omega[i] = w[i] * d;
        }
        let proposal = match weighted_lstsq(xm, &z, &omega) {
            Ok((b, _)) => b,
            // Working weights underflowed on a whole column's support.
            Err(_) if iter > 1 || start.is_some() => {
                last_step = f64::INFINITY;
                break;
            }
            Err(e) => return Err(e),
        };

        let mut candidate = proposal;
        let mut cand_eta = (xm * &candidate).as_slice().to_vec();
        let mut cand_dev = deviance(family, &cand_eta, y, w);
        let mut halvings = 0;
        while !(cand_dev.is_finite() && cand_dev <= dev + 1e-12 * dev.abs()) && halvings < MAX_HALVINGS {
            candidate = (&coef + &candidate) * 0.5;
            cand_eta = (xm * &candidate).as_slice().to_vec();
            cand_dev = deviance(family, &cand_eta, y, w);
            halvings += 1;
        }
        if !(cand_dev.is_finite() && cand_dev <= dev + 1e-12 * dev.abs()) {
            // No improving step exists along the Newton direction.
            converged = true;
            break;
        }

        let change = (cand_dev - dev).abs() / (cand_dev.abs() + dev_floor);
        last_step = (&candidate - &coef).amax();
        coef = candidate;
        eta = cand_eta;
        dev = cand_dev;
        // Newton steps shrink quadratically, so one more small step puts the
        // coefficients at machine precision.
        if change < opts.tolerance && last_step <= 1e-6 * (1.0 + coef.amax()) {
            converged = true;
            break;
        }
    }

    for i in 0..n {
        let mu = family.mean(eta[i]);
        omega[i] = w[i] * family.mu_eta(mu).max(f64::MIN_POSITIVE);
    }
    let cov = weighted_lstsq(xm, &z, &omega)
        .map(|(_, c)| c)
        .unwrap_or_else(|_| DMatrix::from_element(p, p, f64::NAN));

    // Estimates still drifting by O(1) per step once the deviance has
    // flattened out are heading to the boundary of the parameter space.
    let separated = last_step > 1e-2
        || eta
            .iter()
            .zip(w)
            .any(|(&e, &wi)| wi > 0.0 && e.abs() >= ETA_CAP);

    Ok(GlmFit {
        coefficients: coef.as_slice().to_vec(),
        coef_covariance: cov,
        deviance: dev,
        converged: converged && !separated,
        iterations,
        separated,
    })
}

/// Maximizes `sum w_i [y_i log mu_i + (1 - y_i) log(1 - mu_i)]`, `mu = expit(X b)`.
/// Fractional responses in `[0, 1]` are accepted.
pub fn fit_weighted_logistic(x: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<GlmFit> {
    fit_weighted_logistic_from(x, y, w, None, GlmOptions::default())
}

/// Logistic fit with an optional warm start.
pub fn fit_weighted_logistic_from(
    x: &DesignMatrix,
    y: &[f64],
    w: &[f64],
    start: Option<&[f64]>,
    opts: GlmOptions,
) -> Result<GlmFit> {
    if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("logistic responses must lie in [0, 1]"));
    }
    irls(Family::Logistic, x, y, w, start, opts)
}

pub fn fit_weighted_poisson(x: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<GlmFit> {
    fit_weighted_poisson_from(x, y, w, None, GlmOptions::default())
}

pub fn fit_weighted_poisson_from(
    x: &DesignMatrix,
    y: &[f64],
    w: &[f64],
    start: Option<&[f64]>,
    opts: GlmOptions,
) -> Result<GlmFit> {
    if y.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("Poisson responses must be non-negative"));
    }
    irls(Family::Poisson, x, y, w, start, opts)
}

/// Weighted least squares. Rows with zero weight drop out.
pub fn fit_weighted_linear(x: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<LinearFit> {
    check_inputs(x, y, w)?;
    let (coef, xtwx_inv) = weighted_lstsq(x.matrix(), y, w)?;
    let fitted = x.matrix() * &coef;
    let sw: f64 = w.iter().sum();
    let rss: f64 = (0..y.len())
        .map(|i| w[i] * (y[i] - fitted[i]).powi(2))
        .sum();
    let sigma = (rss / sw).sqrt();
    Ok(LinearFit {
        fit: GlmFit {
            coefficients: coef.as_slice().to_vec(),
            coef_covariance: xtwx_inv * (sigma * sigma),
            deviance: rss,
            converged: true,
            iterations: 1,
            separated: false,
        },
        sigma,
    })
}
