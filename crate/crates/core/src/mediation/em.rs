use super::{
    label_switch_correct_mediation, naive_starts, outcome_logdens, MediationData, MediationParams, OutcomeDist,
};
use crate::design::DesignMatrix;
use crate::em::{run_em, EmModel, EmOptions};
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_linear, fit_weighted_logistic_from, fit_weighted_poisson_from, GlmOptions};
use crate::math::expit;
use crate::numdiff::observed_information_se;
use crate::report::FitReport;
use crate::single::compute_pistar;

/// Flat layout: `beta`, gamma columns, `theta`, then `ln sigma` for normal
/// outcomes.
struct MediationModel<'a> {
    data: &'a MediationData,
    dist: OutcomeDist,
    interaction: bool,
    pb: usize,
    pz: usize,
    pt: usize,
    /// Outcome designs with `M = 1` and `M = 0`.
    designs: [DesignMatrix; 2],
    stacked: DesignMatrix,
    y_stacked: Vec<f64>,
    event: Vec<f64>,
    glm: GlmOptions,
}

impl<'a> MediationModel<'a> {
    fn new(data: &'a MediationData, dist: OutcomeDist, interaction: bool) -> Self {
        let mut y_stacked = data.y.clone();
        y_stacked.extend_from_slice(&data.y);
        MediationModel {
            data,
            dist,
            interaction,
            pb: data.mediator_design().ncols(),
            pz: data.z.ncols(),
            pt: MediationParams::theta_len(data.n_covariates(), interaction),
            designs: [data.outcome_design(1.0, interaction), data.outcome_design(0.0, interaction)],
            stacked: data.stacked_outcome_design(interaction),
            y_stacked,
            event: data.mstar_indicator(),
            glm: GlmOptions::default(),
        }
    }

    fn len(&self) -> usize {
        self.pb + 2 * self.pz + self.pt + usize::from(self.dist == OutcomeDist::Normal)
    }

    fn pack(&self, p: &MediationParams) -> Vec<f64> {
        let mut v = p.beta.clone();
        v.extend_from_slice(&p.gamma[0]);
        v.extend_from_slice(&p.gamma[1]);
        v.extend_from_slice(&p.theta);
        if self.dist == OutcomeDist::Normal {
            v.push(p.sigma.expect("checked").ln());
        }
        v
    }

    fn unpack(&self, v: &[f64]) -> MediationParams {
        let (pb, pz, pt) = (self.pb, self.pz, self.pt);
        MediationParams {
            beta: v[..pb].to_vec(),
            gamma: [v[pb..pb + pz].to_vec(), v[pb + pz..pb + 2 * pz].to_vec()],
            theta: v[pb + 2 * pz..pb + 2 * pz + pt].to_vec(),
            sigma: (self.dist == OutcomeDist::Normal).then(|| v[pb + 2 * pz + pt].exp()),
            dist: self.dist,
            interaction: self.interaction,
        }
    }

    /// Per subject, log of `P(M = j) P(M*_i | M = j) f(y_i | M = j)`.
    fn log_terms(&self, v: &[f64]) -> Result<Vec<[f64; 2]>> {
        let p = self.unpack(v);
        let eta_m = self.data.mediator_design().linear_predictor(&p.beta)?;
        let a1 = self.data.z.linear_predictor(&p.gamma[0])?;
        let a2 = self.data.z.linear_predictor(&p.gamma[1])?;
        let eta_y = [
            self.designs[0].linear_predictor(&p.theta)?,
            self.designs[1].linear_predictor(&p.theta)?,
        ];
        let sigma = p.sigma.unwrap_or(1.0);
        Ok((0..self.data.n())
            .map(|i| {
                let pi1 = expit(eta_m[i]);
                let pis = [pi1, 1.0 - pi1];
                let obs = [expit(a1[i]), expit(a2[i])];
                let mut out = [0.0; 2];
                for j in 0..2 {
                    let pk = if self.data.mstar[i] == 1 { obs[j] } else { 1.0 - obs[j] };
                    out[j] = pis[j].ln() + pk.ln() + outcome_logdens(self.data.y[i], eta_y[j][i], sigma, self.dist);
                }
                out
            })
            .collect())
    }

    fn weights(&self, v: &[f64]) -> Result<Vec<[f64; 2]>> {
        self.log_terms(v)?
            .into_iter()
            .enumerate()
            .map(|(i, [l1, l2])| {
                if !(l1.is_finite() || l2.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "E-step denominator underflow at subject {}",
                        i + 1
                    )));
                }
                let w1 = 1.0 / (1.0 + (l2 - l1).exp());
                Ok([w1, 1.0 - w1])
            })
            .collect()
    }
}

impl EmModel for MediationModel<'_> {
    fn em_step(&self, v: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(v)?;
        let cur = self.unpack(v);
        let n = self.data.n();
        let w1: Vec<f64> = w.iter().map(|r| r[0]).collect();
        let ones = vec![1.0; n];
        let mut next =
            fit_weighted_logistic_from(self.data.mediator_design(), &w1, &ones, Some(&cur.beta), self.glm)?.coefficients;
        for j in 0..2 {
            let wj: Vec<f64> = w.iter().map(|r| r[j]).collect();
            let fit = fit_weighted_logistic_from(&self.data.z, &self.event, &wj, Some(&cur.gamma[j]), self.glm)?;
            next.extend(fit.coefficients);
        }
        let mut ws = w1;
        ws.extend(w.iter().map(|r| r[1]));
        match self.dist {
            OutcomeDist::Normal => {
                let fit = fit_weighted_linear(&self.stacked, &self.y_stacked, &ws)?;
                next.extend(fit.fit.coefficients);
                next.push(fit.sigma.max(1e-12).ln());
            }
            OutcomeDist::Bernoulli => {
                let fit = fit_weighted_logistic_from(&self.stacked, &self.y_stacked, &ws, Some(&cur.theta), self.glm)?;
                next.extend(fit.coefficients);
            }
            OutcomeDist::Poisson => {
                let fit = fit_weighted_poisson_from(&self.stacked, &self.y_stacked, &ws, Some(&cur.theta), self.glm)?;
                next.extend(fit.coefficients);
            }
        }
        Ok(next)
    }

    fn loglik(&self, v: &[f64]) -> f64 {
        match self.log_terms(v) {
            Ok(terms) => terms
                .iter()
                .map(|&[a, b]| {
                    let m = a.max(b);
                    m + ((a - m).exp() + (b - m).exp()).ln()
                })
                .sum(),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Observed-data log-likelihood with the true mediator summed out.
pub fn mediation_loglik(params: &MediationParams, data: &MediationData) -> Result<f64> {
    params.check(data)?;
    data.check_outcome(params.dist)?;
    let model = MediationModel::new(data, params.dist, params.interaction);
    Ok(model.loglik(&model.pack(params)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediationFit {
    pub params: MediationParams,
    pub report: FitReport,
    pub loglik_path: Vec<f64>,
}

pub(crate) fn mediation_rows(report: &mut FitReport, params: &MediationParams, ses: &[f64], converged: Option<bool>) {
    let mut names = params.beta_names();
    names.extend(params.gamma_names());
    names.extend(params.theta_names());
    let mut est = params.beta.clone();
    est.extend(params.gamma.iter().flatten());
    est.extend_from_slice(&params.theta);
    if let Some(s) = params.sigma {
        names.push("sigma".into());
        est.push(s);
    }
    report.push_rows(&names, &est, ses, converged);
}

pub fn em_fit_mediation(
    data: &MediationData,
    start: Option<&MediationParams>,
    dist: OutcomeDist,
    interaction: bool,
    opts: &EmOptions,
) -> Result<MediationFit> {
    data.check_outcome(dist)?;
    let start = match start {
        Some(s) => {
            if s.dist != dist || s.interaction != interaction {
                return Err(Error::invalid("starting values disagree with the outcome model"));
            }
            s.check(data)?;
            s.clone()
        }
        None => naive_starts(data, dist, interaction)?,
    };
    let model = MediationModel::new(data, dist, interaction);
    let trace = run_em(&model, &model.pack(&start), opts)?;
    let raw = model.unpack(&trace.params);
    let (params, applied) = label_switch_correct_mediation(&raw, &data.z)?;
    let v = model.pack(&params);
    let mut ses = if opts.compute_se {
        observed_information_se(|t| model.loglik(t), &v)
    } else {
        vec![f64::NAN; model.len()]
    };
    if let Some(s) = params.sigma {
        let last = ses.len() - 1;
        ses[last] *= s;
    }
    let acc = compute_pistar(&params.gamma, &data.z)?;
    let mut report = FitReport::new("comma-em");
    mediation_rows(&mut report, &params, &ses, Some(trace.converged));
    report.converged = trace.converged;
    report.loglik = Some(model.loglik(&v));
    report.iterations = trace.iterations;
    report.label_correction_applied = applied;
    report.sensitivity = Some(acc.sensitivity);
    report.specificity = Some(acc.specificity);
    Ok(MediationFit {
        params,
        report,
        loglik_path: trace.loglik_path,
    })
}
