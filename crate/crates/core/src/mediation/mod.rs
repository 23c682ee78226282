//! Mediation with a misclassified binary mediator `M`. The exposure `X`
//! and covariates `C` drive `M`; `Z` drives the recorded `M*`; the outcome
//! `Y` depends on `X`, `M` and `C`.
//!
//! Inside outcome models the mediator enters numerically: `M = 1` as 1 and
//! `M = 2` as 0.

mod effects;
mod em;
mod ols;
mod pvw;

pub use effects::{covariate_profile, effect_estimates, EffectScale, Effects};
pub use em::{em_fit_mediation, mediation_loglik, MediationFit};
pub use ols::{ols_correct, ols_solve, OlsSolution};
pub use pvw::{predictive_values, pvw_fit, PvwWeights};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::{clamp_eta, expit};
use crate::single::{compute_pistar, SingleOutcomeData, SingleOutcomeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeDist {
    #[default]
    Normal,
    Bernoulli,
    Poisson,
}

impl std::str::FromStr for OutcomeDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(OutcomeDist::Normal),
            "bernoulli" | "binary" | "binomial" => Ok(OutcomeDist::Bernoulli),
            "poisson" => Ok(OutcomeDist::Poisson),
            other => Err(Error::Config(format!("unknown outcome distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationParams {
    /// Mediator model on `[1, X, C]`.
    pub beta: Vec<f64>,
    /// `gamma[j]`: `logit P(M* = 1 | M = j + 1)` on `Z`.
    pub gamma: [Vec<f64>; 2],
    /// Outcome model on `[1, X, M, C..., X*M]`; the last entry exists only
    /// with an interaction.
    pub theta: Vec<f64>,
    /// Residual scale, normal outcomes only.
    pub sigma: Option<f64>,
    pub dist: OutcomeDist,
    pub interaction: bool,
}

impl MediationParams {
    pub fn theta_len(n_cov: usize, interaction: bool) -> usize {
        3 + n_cov + usize::from(interaction)
    }

    pub fn theta_x(&self) -> f64 {
        self.theta[1]
    }

    pub fn theta_m(&self) -> f64 {
        self.theta[2]
    }

    pub fn theta_xm(&self) -> f64 {
        if self.interaction {
            *self.theta.last().unwrap()
        } else {
            0.0
        }
    }

    /// Relabels the mediator: `beta -> -beta`, gamma columns swapped, and the
    /// outcome model re-expressed for `M' = 1 - M`.
    pub fn permuted(&self) -> Self {
        let mut theta = self.theta.clone();
        theta[0] += theta[2];
        theta[2] = -theta[2];
        if self.interaction {
            let last = theta.len() - 1;
            theta[1] += theta[last];
            theta[last] = -theta[last];
        }
        MediationParams {
            beta: self.beta.iter().map(|b| -b).collect(),
            gamma: [self.gamma[1].clone(), self.gamma[0].clone()],
            theta,
            ..self.clone()
        }
    }

    pub fn beta_names(&self) -> Vec<String> {
        (0..self.beta.len()).map(|i| format!("beta_{i}")).collect()
    }

    pub fn gamma_names(&self) -> Vec<String> {
        let pz = self.gamma[0].len();
        (1..=2)
            .flat_map(|j| (1..=pz).map(move |c| format!("gamma{c}{j}")))
            .collect()
    }

    pub fn theta_names(&self) -> Vec<String> {
        let n_cov = self.theta.len() - 3 - usize::from(self.interaction);
        let mut names = vec!["theta_0".to_string(), "theta_x".into(), "theta_m".into()];
        names.extend((1..=n_cov).map(|k| format!("theta_c{k}")));
        if self.interaction {
            names.push("theta_xm".into());
        }
        names
    }

    fn check(&self, data: &MediationData) -> Result<()> {
        let nc = data.n_covariates();
        if self.beta.len() != 2 + nc {
            return Err(Error::dim("beta", 2 + nc, self.beta.len()));
        }
        for col in &self.gamma {
            if col.len() != data.z.ncols() {
                return Err(Error::dim("gamma column", data.z.ncols(), col.len()));
            }
        }
        let pt = Self::theta_len(nc, self.interaction);
        if self.theta.len() != pt {
            return Err(Error::dim("theta", pt, self.theta.len()));
        }
        if self.dist == OutcomeDist::Normal && !self.sigma.is_some_and(|s| s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("normal outcomes need a positive sigma"));
        }
        let all = self.beta.iter().chain(self.gamma.iter().flatten()).chain(&self.theta);
        if all.copied().any(|v: f64| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediationData {
    pub mstar: Vec<u8>,
    pub y: Vec<f64>,
    /// Single exposure column.
    pub x: Vec<f64>,
    /// Covariate columns.
    pub c: Vec<Vec<f64>>,
    pub z: DesignMatrix,
    mediator_design: DesignMatrix,
}

impl MediationData {
    pub fn new(mstar: Vec<u8>, y: Vec<f64>, x: Vec<f64>, c: Vec<Vec<f64>>, z: DesignMatrix) -> Result<Self> {
        let n = mstar.len();
        if n == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if y.len() != n {
            return Err(Error::dim("outcome", n, y.len()));
        }
        if x.len() != n {
            return Err(Error::dim("exposure", n, x.len()));
        }
        if z.nrows() != n {
            return Err(Error::dim("Z rows", n, z.nrows()));
        }
        if mstar.iter().any(|&k| k != 1 && k != 2) {
            return Err(Error::invalid("observed mediator must be coded 1 or 2"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("outcome contains non-finite values"));
        }
        let mut cols = vec![x.clone()];
        cols.extend(c.iter().cloned());
        let mediator_design = DesignMatrix::from_columns(n, &cols)?;
        Ok(MediationData {
            mstar,
            y,
            x,
            c,
            z,
            mediator_design,
        })
    }

    pub fn n(&self) -> usize {
        self.mstar.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.c.len()
    }

    /// `[1, X, C]`.
    pub fn mediator_design(&self) -> &DesignMatrix {
        &self.mediator_design
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        MediationData {
            mstar: rows.iter().map(|&i| self.mstar[i]).collect(),
            y: pick(&self.y),
            x: pick(&self.x),
            c: self.c.iter().map(pick).collect(),
            z: self.z.select_rows(rows),
            mediator_design: self.mediator_design.select_rows(rows),
        }
    }

    pub(crate) fn check_outcome(&self, dist: OutcomeDist) -> Result<()> {
        for (i, &v) in self.y.iter().enumerate() {
            let ok = match dist {
                OutcomeDist::Normal => true,
                OutcomeDist::Bernoulli => v == 0.0 || v == 1.0,
                OutcomeDist::Poisson => v >= 0.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "outcome value {v} at row {} is not valid for a {dist:?} outcome",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Outcome design with the mediator fixed at numeric value `m` for every row.
    pub fn outcome_design(&self, m: f64, interaction: bool) -> DesignMatrix {
        let n = self.n();
        let mut cols = vec![self.x.clone(), vec![m; n]];
        cols.extend(self.c.iter().cloned());
        if interaction {
            cols.push(self.x.iter().map(|x| x * m).collect());
        }
        DesignMatrix::from_columns(n, &cols).expect("validated columns")
    }

    /// Rows `M = 1` for every subject followed by rows `M = 0`.
    pub(crate) fn stacked_outcome_design(&self, interaction: bool) -> DesignMatrix {
        let top = self.outcome_design(1.0, interaction);
        let bottom = self.outcome_design(0.0, interaction);
        let n = self.n();
        let p = top.ncols();
        let m = nalgebra::DMatrix::from_fn(2 * n, p, |i, j| {
            if i < n {
                top.get(i, j)
            } else {
                bottom.get(i - n, j)
            }
        });
        DesignMatrix::from_matrix(m).expect("validated columns")
    }

    /// Observed mediator as a single-outcome problem on `[1, X, C]` and `Z`.
    pub fn as_single(&self) -> SingleOutcomeData {
        SingleOutcomeData::new(self.mstar.clone(), self.mediator_design.clone(), self.z.clone())
            .expect("validated blocks")
    }

    pub(crate) fn mstar_indicator(&self) -> Vec<f64> {
        self.mstar.iter().map(|&k| if k == 1 { 1.0 } else { 0.0 }).collect()
    }
}

/// Per-subject mediator probabilities and average accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct MediatorProbs {
    /// `[P(M=1), P(M=2)]`.
    pub pi: Vec<[f64; 2]>,
    /// `P(M* = k | M = j)` as `[k][j]`.
    pub pistar: Vec<[[f64; 2]; 2]>,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn mediator_probs(beta: &[f64], gamma: &[Vec<f64>; 2], data: &MediationData) -> Result<MediatorProbs> {
    let pi = crate::single::compute_pi(beta, data.mediator_design())?;
    let t = compute_pistar(gamma, &data.z)?;
    Ok(MediatorProbs {
        pi,
        pistar: t.probs,
        sensitivity: t.sensitivity,
        specificity: t.specificity,
    })
}

/// Log density (or pmf) of `y` given the outcome linear predictor `eta`.
pub(crate) fn outcome_logdens(y: f64, eta: f64, sigma: f64, dist: OutcomeDist) -> f64 {
    match dist {
        OutcomeDist::Normal => {
            let r = (y - eta) / sigma;
            -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * r * r
        }
        OutcomeDist::Bernoulli => {
            let p = expit(eta);
            if y == 1.0 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        }
        OutcomeDist::Poisson => {
            let e = clamp_eta(eta);
            y * e - e.exp() - ln_gamma(y + 1.0)
        }
    }
}

/// Outcome log-likelihood of one subject with the mediator set to numeric `m`.
#[allow(clippy::too_many_arguments)]
pub fn outcome_loglik_contrib(
    y: f64,
    x: f64,
    m: f64,
    c: &[f64],
    theta: &[f64],
    sigma: Option<f64>,
    dist: OutcomeDist,
    interaction: bool,
) -> Result<f64> {
    let expected = MediationParams::theta_len(c.len(), interaction);
    if theta.len() != expected {
        return Err(Error::dim("theta", expected, theta.len()));
    }
    let valid = match dist {
        OutcomeDist::Normal => y.is_finite(),
        OutcomeDist::Bernoulli => y == 0.0 || y == 1.0,
        OutcomeDist::Poisson => y >= 0.0 && y.fract() == 0.0,
    };
    if !valid {
        return Err(Error::invalid(format!("outcome {y} is not valid for {dist:?}")));
    }
    let mut eta = theta[0] + theta[1] * x + theta[2] * m;
    for (k, ck) in c.iter().enumerate() {
        eta += theta[3 + k] * ck;
    }
    if interaction {
        eta += theta[3 + c.len()] * x * m;
    }
    let s = match dist {
        OutcomeDist::Normal => sigma
            .filter(|s| *s > 0.0)
            .ok_or_else(|| Error::invalid("normal outcomes need a positive sigma"))?,
        _ => 1.0,
    };
    Ok(outcome_logdens(y, eta, s, dist))
}

/// Keeps the labeling with the larger average Youden's J.
pub fn label_switch_correct_mediation(params: &MediationParams, z: &DesignMatrix) -> Result<(MediationParams, bool)> {
    let j = compute_pistar(&params.gamma, z)?.youden_j();
    let permuted = params.permuted();
    let jp = compute_pistar(&permuted.gamma, z)?.youden_j();
    if jp > j {
        Ok((permuted, true))
    } else {
        Ok((params.clone(), false))
    }
}

/// Starting values from fits that ignore misclassification: logistic `M*`
/// on `[1, X, C]`, zero gamma, and the outcome regressed on `M*` directly.
pub fn naive_starts(data: &MediationData, dist: OutcomeDist, interaction: bool) -> Result<MediationParams> {
    let ones = vec![1.0; data.n()];
    let m01 = data.mstar_indicator();
    let beta = crate::glm::fit_weighted_logistic(data.mediator_design(), &m01, &ones)?.coefficients;
    let naive = naive_outcome_fit(data, dist, interaction)?;
    Ok(MediationParams {
        beta,
        gamma: [vec![0.0; data.z.ncols()], vec![0.0; data.z.ncols()]],
        theta: naive.0,
        sigma: naive.1,
        dist,
        interaction,
    })
}

/// Outcome model with `M*` in place of `M`; sigma uses the `n - p` divisor.
pub fn naive_outcome_fit(data: &MediationData, dist: OutcomeDist, interaction: bool) -> Result<(Vec<f64>, Option<f64>)> {
    data.check_outcome(dist)?;
    let n = data.n();
    let m01 = data.mstar_indicator();
    let mut cols = vec![data.x.clone(), m01.clone()];
    cols.extend(data.c.iter().cloned());
    if interaction {
        cols.push(data.x.iter().zip(&m01).map(|(x, m)| x * m).collect());
    }
    let design = DesignMatrix::from_columns(n, &cols)?;
    let ones = vec![1.0; n];
    Ok(match dist {
        OutcomeDist::Normal => {
            let fit = crate::glm::fit_weighted_linear(&design, &data.y, &ones)?;
            let dof = (n as f64 - design.ncols() as f64).max(1.0);
            let sigma = fit.sigma * (n as f64 / dof).sqrt();
            (fit.fit.coefficients, Some(sigma.max(1e-8)))
        }
        OutcomeDist::Bernoulli => (crate::glm::fit_weighted_logistic(&design, &data.y, &ones)?.coefficients, None),
        OutcomeDist::Poisson => (crate::glm::fit_weighted_poisson(&design, &data.y, &ones)?.coefficients, None),
    })
}

pub(crate) fn single_part(params: &MediationParams) -> SingleOutcomeParams {
    SingleOutcomeParams {
        beta: params.beta.clone(),
        gamma: params.gamma.clone(),
    }
}
