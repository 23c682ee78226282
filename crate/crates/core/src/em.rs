//! Fixed-point driver shared by every EM estimator, with optional SQUAREM
//! extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::max_abs_diff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Accel {
    #[default]
    Plain,
    Squarem,
}

impl std::str::FromStr for Accel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "em" => Ok(Accel::Plain),
            "squarem" => Ok(Accel::Squarem),
            other => Err(Error::Config(format!("unknown EM acceleration `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop once the largest parameter change of an EM step falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
    pub accel: Accel,
    /// Observed-information standard errors; off for bootstrap refits.
    pub compute_se: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tolerance: 1e-7,
            max_iter: 1500,
            accel: Accel::Plain,
            compute_se: true,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("EM tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("EM max_iter must be positive"));
        }
        Ok(())
    }
}

/// A model whose parameters live in one flat vector.
pub trait EmModel {
    /// One E-step followed by one M-step.
    fn em_step(&self, params: &[f64]) -> Result<Vec<f64>>;

    /// Observed-data log-likelihood.
    fn loglik(&self, params: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub params: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every accepted iterate, starting with the start.
    pub loglik_path: Vec<f64>,
}

pub fn run_em<M: EmModel + ?Sized>(model: &M, start: &[f64], opts: &EmOptions) -> Result<EmTrace> {
    opts.validate()?;
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("EM starting values must be finite"));
    }
    let mut current = start.to_vec();
    let mut ll = model.loglik(&current);
    let mut path = vec![ll];
    let mut best = (current.clone(), ll);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let step1 = model.em_step(&current)?;
        if step1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("EM step produced non-finite parameters".into()));
        }
        let delta = max_abs_diff(&step1, &current);

        let next = match opts.accel {
            Accel::Plain => step1,
            Accel::Squarem if delta < opts.tolerance => step1,
            Accel::Squarem => squarem_cycle(model, &current, step1)?,
        };

        current = next;
        ll = model.loglik(&current);
        path.push(ll);
        if ll >= best.1 || !best.1.is_finite() {
            best = (current.clone(), ll);
        }
        if delta < opts.tolerance {
            converged = true;
            break;
        }
    }

    let (params, loglik) = if converged { (current, ll) } else { best };
    Ok(EmTrace {
        params,
        loglik,
        iterations,
        converged,
        loglik_path: path,
    })
}

/// One SqS3 cycle started from `theta0` with `theta1 = F(theta0)` already known.
fn squarem_cycle<M: EmModel + ?Sized>(model: &M, theta0: &[f64], theta1: Vec<f64>) -> Result<Vec<f64>> {
    let theta2 = model.em_step(&theta1)?;
    let r: Vec<f64> = theta1.iter().zip(theta0).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = theta2
        .iter()
        .zip(&theta1)
        .zip(&r)
        .map(|((a, b), ri)| (a - b) - ri)
        .collect();
    let r_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v_norm == 0.0 || !v_norm.is_finite() {
        return Ok(theta2);
    }
    let alpha = (-r_norm / v_norm).min(-1.0);
    let extrapolated: Vec<f64> = theta0
        .iter()
        .zip(&r)
        .zip(&v)
        .map(|((t, ri), vi)| t - 2.0 * alpha * ri + alpha * alpha * vi)
        .collect();
    if extrapolated.iter().any(|x| !x.is_finite()) {
        return Ok(theta2);
    }
    let stabilized = match model.em_step(&extrapolated) {
        Ok(p) if p.iter().all(|x| x.is_finite()) => p,
        _ => return Ok(theta2),
    };
    let ll_stab = model.loglik(&stabilized);
    let ll_two = model.loglik(&theta2);
    if ll_stab.is_finite() && ll_stab >= ll_two {
        Ok(stabilized)
    } else {
        Ok(theta2)
    }
}
