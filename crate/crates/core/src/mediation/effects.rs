use serde::{Deserialize, Serialize};

use super::{MediationData, MediationParams, OutcomeDist};
use crate::error::{Error, Result};
use crate::math::{expit, mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectScale {
    /// Mean differences (continuous outcomes).
    Difference,
    /// Odds ratios (binary) or rate ratios (count outcomes).
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    pub scale: EffectScale,
    pub nde: f64,
    pub nie: f64,
    /// Sum (difference scale) or product (ratio scale) of NDE and NIE.
    pub total: f64,
    /// Present when a mediator level was supplied.
    pub cde: Option<f64>,
}

/// Sample means of the covariates, the default profile for effects.
pub fn covariate_profile(data: &MediationData) -> Vec<f64> {
    data.c.iter().map(|col| mean(col)).collect()
}

/// Natural direct and indirect effects of moving the exposure from `x0` to
/// `x1` at covariate values `c`, plus the controlled direct effect at
/// mediator level `m_level` (numeric, 1 for `M = 1`).
pub fn effect_estimates(
    params: &MediationParams,
    x0: f64,
    x1: f64,
    m_level: Option<f64>,
    c: &[f64],
) -> Result<Effects> {
    let nc = params.beta.len().saturating_sub(2);
    if c.len() != nc {
        return Err(Error::dim("covariate profile", nc, c.len()));
    }
    let (tx, tm, txm) = (params.theta_x(), params.theta_m(), params.theta_xm());
    let (b0, bx) = (params.beta[0], params.beta[1]);
    let bc: f64 = params.beta[2..].iter().zip(c).map(|(b, v)| b * v).sum();
    let lin = |x: f64| b0 + bx * x + bc;
    let dx = x1 - x0;
    Ok(match params.dist {
        OutcomeDist::Normal => {
            let (p0, p1) = (expit(lin(x0)), expit(lin(x1)));
            let nde = (tx + txm * p0) * dx;
            let nie = (tm + txm * x1) * (p1 - p0);
            Effects {
                scale: EffectScale::Difference,
                nde,
                nie,
                total: nde + nie,
                cde: m_level.map(|m| (tx + txm * m) * dx),
            }
        }
        OutcomeDist::Bernoulli | OutcomeDist::Poisson => {
            let nde = (tx * dx).exp() * (1.0 + (tm + txm * x1 + lin(x0)).exp())
                / (1.0 + (tm + txm * x0 + lin(x0)).exp());
            let nie = ((1.0 + lin(x0).exp()) * (1.0 + (tm + txm * x1 + lin(x1)).exp()))
                / ((1.0 + lin(x1).exp()) * (1.0 + (tm + txm * x1 + lin(x0)).exp()));
            Effects {
                scale: EffectScale::Ratio,
                nde,
                nie,
                total: nde * nie,
                cde: m_level.map(|m| ((tx + txm * m) * dx).exp()),
            }
        }
    })
}
