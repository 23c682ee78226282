//! One misclassified binary outcome: latent `Y` follows a logistic model in
//! `X`, the recorded `Y*` follows a logistic model in `Z` given `Y`.

use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::em::{run_em, EmModel, EmOptions};
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_logistic, fit_weighted_logistic_from, GlmOptions};
use crate::math::{expit, mean};
use crate::numdiff::observed_information_se;
use crate::report::FitReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleOutcomeParams {
    pub beta: Vec<f64>,
    /// `gamma[j]` parameterizes `logit P(Y* = 1 | Y = j + 1)`.
    pub gamma: [Vec<f64>; 2],
}

impl SingleOutcomeParams {
    pub fn zeros(px: usize, pz: usize) -> Self {
        SingleOutcomeParams {
            beta: vec![0.0; px],
            gamma: [vec![0.0; pz], vec![0.0; pz]],
        }
    }

    /// `beta`, then `gamma` column by column.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.gamma[0]);
        v.extend_from_slice(&self.gamma[1]);
        v
    }

    pub fn from_slice(v: &[f64], px: usize, pz: usize) -> Result<Self> {
        if v.len() != px + 2 * pz {
            return Err(Error::dim("single-outcome parameter vector", px + 2 * pz, v.len()));
        }
        Ok(SingleOutcomeParams {
            beta: v[..px].to_vec(),
            gamma: [v[px..px + pz].to_vec(), v[px + pz..].to_vec()],
        })
    }

    /// Swaps the latent labels: `beta -> -beta`, gamma columns exchanged.
    pub fn permuted(&self) -> Self {
        SingleOutcomeParams {
            beta: self.beta.iter().map(|b| -b).collect(),
            gamma: [self.gamma[1].clone(), self.gamma[0].clone()],
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.beta.len()).map(|i| format!("beta{i}")).collect();
        for j in 1..=2 {
            for c in 1..=self.gamma[0].len() {
                names.push(format!("gamma{c}{j}"));
            }
        }
        names
    }

    fn check(&self, x: &DesignMatrix, z: &DesignMatrix) -> Result<()> {
        if self.beta.len() != x.ncols() {
            return Err(Error::dim("beta", x.ncols(), self.beta.len()));
        }
        for col in &self.gamma {
            if col.len() != z.ncols() {
                return Err(Error::dim("gamma column", z.ncols(), col.len()));
            }
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleOutcomeData {
    pub ystar: Vec<u8>,
    pub x: DesignMatrix,
    pub z: DesignMatrix,
}

impl SingleOutcomeData {
    pub fn new(ystar: Vec<u8>, x: DesignMatrix, z: DesignMatrix) -> Result<Self> {
        let n = ystar.len();
        if x.nrows() != n {
            return Err(Error::dim("X rows", n, x.nrows()));
        }
        if z.nrows() != n {
            return Err(Error::dim("Z rows", n, z.nrows()));
        }
        if n == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if ystar.iter().any(|&k| k != 1 && k != 2) {
            return Err(Error::invalid("observed outcome must be coded 1 or 2"));
        }
        Ok(SingleOutcomeData { ystar, x, z })
    }

    pub fn n(&self) -> usize {
        self.ystar.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        SingleOutcomeData {
            ystar: rows.iter().map(|&i| self.ystar[i]).collect(),
            x: self.x.select_rows(rows),
            z: self.z.select_rows(rows),
        }
    }

    pub(crate) fn event_indicator(&self) -> Vec<f64> {
        self.ystar.iter().map(|&k| if k == 1 { 1.0 } else { 0.0 }).collect()
    }
}

/// Per-subject `P(Y* = k | Y = j)` as `probs[i][k][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PistarTable {
    pub probs: Vec<[[f64; 2]; 2]>,
    /// Mean of `P(Y* = 1 | Y = 1)`.
    pub sensitivity: f64,
    /// Mean of `P(Y* = 2 | Y = 2)`.
    pub specificity: f64,
}

impl PistarTable {
    pub fn youden_j(&self) -> f64 {
        self.sensitivity + self.specificity - 1.0
    }
}

/// `[P(Y=1|x_i), P(Y=2|x_i)]` per subject.
pub fn compute_pi(beta: &[f64], x: &DesignMatrix) -> Result<Vec<[f64; 2]>> {
    let eta = x.linear_predictor(beta)?;
    Ok(eta
        .into_iter()
        .map(|e| {
            let p = expit(e);
            [p, 1.0 - p]
        })
        .collect())
}

pub fn compute_pistar(gamma: &[Vec<f64>; 2], z: &DesignMatrix) -> Result<PistarTable> {
    let e1 = z.linear_predictor(&gamma[0])?;
    let e2 = z.linear_predictor(&gamma[1])?;
    let probs: Vec<[[f64; 2]; 2]> = e1
        .iter()
        .zip(&e2)
        .map(|(&a, &b)| {
            let (p1, p2) = (expit(a), expit(b));
            [[p1, p2], [1.0 - p1, 1.0 - p2]]
        })
        .collect();
    let sensitivity = mean(&probs.iter().map(|p| p[0][0]).collect::<Vec<_>>());
    let specificity = mean(&probs.iter().map(|p| p[1][1]).collect::<Vec<_>>());
    Ok(PistarTable {
        probs,
        sensitivity,
        specificity,
    })
}

/// Which observation probabilities are pinned rather than estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    None,
    /// `P(Y* = 1 | Y = 2) = 0`; only the first gamma column is free.
    PerfectSpecificity,
    /// `P(Y* = 2 | Y = 1) = 0`; only the second gamma column is free.
    PerfectSensitivity,
}

impl Constraint {
    fn free_columns(self) -> &'static [usize] {
        match self {
            Constraint::None => &[0, 1],
            Constraint::PerfectSpecificity => &[0],
            Constraint::PerfectSensitivity => &[1],
        }
    }
}

/// Flat-vector view of the model used by the EM driver and the Hessian.
struct SingleModel<'a> {
    data: &'a SingleOutcomeData,
    constraint: Constraint,
    px: usize,
    pz: usize,
    /// Parallel to `data.ystar`, 1 for the event.
    event: Vec<f64>,
    glm: GlmOptions,
}

impl<'a> SingleModel<'a> {
    fn new(data: &'a SingleOutcomeData, constraint: Constraint) -> Self {
        SingleModel {
            data,
            constraint,
            px: data.x.ncols(),
            pz: data.z.ncols(),
            event: data.event_indicator(),
            glm: GlmOptions::default(),
        }
    }

    fn len(&self) -> usize {
        self.px + self.pz * self.constraint.free_columns().len()
    }

    /// Per subject: `P(Y=1)` and `P(Y*=1 | Y=j)` for both `j`.
    fn probabilities(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        let px = self.px;
        let pz = self.pz;
        let pi: Vec<f64> = self
            .data
            .x
            .linear_predictor(&theta[..px])?
            .into_iter()
            .map(expit)
            .collect();
        let n = self.data.n();
        let mut a = vec![[0.0; 2]; n];
        match self.constraint {
            Constraint::PerfectSpecificity => a.iter_mut().for_each(|r| r[1] = 0.0),
            Constraint::PerfectSensitivity => a.iter_mut().for_each(|r| r[0] = 1.0),
            Constraint::None => {}
        }
        for (slot, &col) in self.constraint.free_columns().iter().enumerate() {
            let g = &theta[px + slot * pz..px + (slot + 1) * pz];
            for (i, e) in self.data.z.linear_predictor(g)?.into_iter().enumerate() {
                a[i][col] = expit(e);
            }
        }
        Ok((pi, a))
    }

    fn weights(&self, theta: &[f64]) -> Result<Vec<[f64; 2]>> {
        let (pi, a) = self.probabilities(theta)?;
        self.data
            .ystar
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let lik = |j: usize| if k == 1 { a[i][j] } else { 1.0 - a[i][j] };
                let num1 = lik(0) * pi[i];
                let num2 = lik(1) * (1.0 - pi[i]);
                let den = num1 + num2;
                if !(den > 0.0) || !den.is_finite() {
                    return Err(Error::Numerical(format!(
                        "E-step denominator underflow at subject {}",
                        i + 1
                    )));
                }
                Ok([num1 / den, num2 / den])
            })
            .collect()
    }
}

impl EmModel for SingleModel<'_> {
    fn em_step(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(theta)?;
        let w1: Vec<f64> = w.iter().map(|r| r[0]).collect();
        let ones = vec![1.0; w.len()];
        let px = self.px;
        let pz = self.pz;
        let beta = fit_weighted_logistic_from(&self.data.x, &w1, &ones, Some(&theta[..px]), self.glm)?;
        let mut next = beta.coefficients;
        for (slot, &col) in self.constraint.free_columns().iter().enumerate() {
            let wj: Vec<f64> = w.iter().map(|r| r[col]).collect();
            let start = &theta[px + slot * pz..px + (slot + 1) * pz];
            let g = fit_weighted_logistic_from(&self.data.z, &self.event, &wj, Some(start), self.glm)?;
            next.extend(g.coefficients);
        }
        Ok(next)
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        let Ok((pi, a)) = self.probabilities(theta) else {
            return f64::NEG_INFINITY;
        };
        self.data
            .ystar
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let lik = |j: usize| if k == 1 { a[i][j] } else { 1.0 - a[i][j] };
                (lik(0) * pi[i] + lik(1) * (1.0 - pi[i])).ln()
            })
            .sum()
    }
}

/// `sum_i log sum_j P(Y*_i | Y = j) P(Y = j)`.
pub fn observed_loglik(params: &SingleOutcomeParams, data: &SingleOutcomeData) -> Result<f64> {
    params.check(&data.x, &data.z)?;
    Ok(SingleModel::new(data, Constraint::None).loglik(&params.to_vec()))
}

/// Posterior class probabilities `w_ij = P(Y_i = j | Y*_i, x_i, z_i)`.
pub fn e_step_weights(params: &SingleOutcomeParams, data: &SingleOutcomeData) -> Result<Vec<[f64; 2]>> {
    params.check(&data.x, &data.z)?;
    SingleModel::new(data, Constraint::None).weights(&params.to_vec())
}

/// Keeps the labeling with the larger average Youden's J.
pub fn label_switch_correct(params: &SingleOutcomeParams, z: &DesignMatrix) -> Result<(SingleOutcomeParams, bool)> {
    let j_id = compute_pistar(&params.gamma, z)?.youden_j();
    let permuted = params.permuted();
    let j_perm = compute_pistar(&permuted.gamma, z)?.youden_j();
    if j_perm > j_id {
        Ok((permuted, true))
    } else {
        Ok((params.clone(), false))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleFit {
    pub params: SingleOutcomeParams,
    pub report: FitReport,
    pub loglik_path: Vec<f64>,
}

/// Logistic fit of `1[Y* = 1]` on `X`, the usual starting point for `beta`.
pub fn naive_beta(data: &SingleOutcomeData) -> Result<Vec<f64>> {
    let ones = vec![1.0; data.n()];
    Ok(fit_weighted_logistic(&data.x, &data.event_indicator(), &ones)?.coefficients)
}

pub fn em_fit(data: &SingleOutcomeData, start: Option<&SingleOutcomeParams>, opts: &EmOptions) -> Result<SingleFit> {
    let (px, pz) = (data.x.ncols(), data.z.ncols());
    let start = match start {
        Some(s) => {
            s.check(&data.x, &data.z)?;
            s.clone()
        }
        None => SingleOutcomeParams {
            beta: naive_beta(data)?,
            gamma: [vec![0.0; pz], vec![0.0; pz]],
        },
    };
    let model = SingleModel::new(data, Constraint::None);
    let trace = run_em(&model, &start.to_vec(), opts)?;
    let raw = SingleOutcomeParams::from_slice(&trace.params, px, pz)?;
    let (params, applied) = label_switch_correct(&raw, &data.z)?;
    let theta = params.to_vec();
    let ses = if opts.compute_se {
        observed_information_se(|t| model.loglik(t), &theta)
    } else {
        vec![f64::NAN; theta.len()]
    };
    let pistar = compute_pistar(&params.gamma, &data.z)?;
    let mut report = FitReport::new("combo-em");
    report.push_rows(&params.names(), &theta, &ses, Some(trace.converged));
    report.converged = trace.converged;
    report.loglik = Some(model.loglik(&theta));
    report.iterations = trace.iterations;
    report.label_correction_applied = applied;
    report.sensitivity = Some(pistar.sensitivity);
    report.specificity = Some(pistar.specificity);
    Ok(SingleFit {
        params,
        report,
        loglik_path: trace.loglik_path,
    })
}

/// EM with one observation-probability column pinned.
pub fn constrained_em_fit(data: &SingleOutcomeData, constraint: Constraint, opts: &EmOptions) -> Result<FitReport> {
    let model = SingleModel::new(data, constraint);
    let mut start = naive_beta(data)?;
    start.resize(model.len(), 0.0);
    let trace = run_em(&model, &start, opts)?;
    let ses = if opts.compute_se {
        observed_information_se(|t| model.loglik(t), &trace.params)
    } else {
        vec![f64::NAN; trace.params.len()]
    };
    let mut names: Vec<String> = (1..=model.px).map(|i| format!("beta{i}")).collect();
    for &col in constraint.free_columns() {
        names.extend((1..=model.pz).map(|c| format!("gamma{c}{}", col + 1)));
    }
    let (_, a) = model.probabilities(&trace.params)?;
    let method = match constraint {
        Constraint::None => "combo-em",
        Constraint::PerfectSpecificity => "perfect-specificity",
        Constraint::PerfectSensitivity => "perfect-sensitivity",
    };
    let mut report = FitReport::new(method);
    report.push_rows(&names, &trace.params, &ses, Some(trace.converged));
    report.converged = trace.converged;
    report.loglik = Some(trace.loglik);
    report.iterations = trace.iterations;
    report.sensitivity = Some(mean(&a.iter().map(|r| r[0]).collect::<Vec<_>>()));
    report.specificity = Some(mean(&a.iter().map(|r| 1.0 - r[1]).collect::<Vec<_>>()));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonFits {
    pub naive: FitReport,
    pub perfect_specificity: FitReport,
    pub perfect_sensitivity: FitReport,
}

pub fn comparison_fits(data: &SingleOutcomeData, opts: &EmOptions) -> Result<ComparisonFits> {
    let ones = vec![1.0; data.n()];
    let fit = fit_weighted_logistic(&data.x, &data.event_indicator(), &ones)?;
    let mut naive = FitReport::new("naive");
    let names: Vec<String> = (1..=data.x.ncols()).map(|i| format!("beta{i}")).collect();
    naive.push_rows(&names, &fit.coefficients, &fit.standard_errors(), Some(fit.converged));
    naive.converged = fit.converged;
    naive.iterations = fit.iterations;
    naive.loglik = Some(-fit.deviance / 2.0);
    Ok(ComparisonFits {
        naive,
        perfect_specificity: constrained_em_fit(data, Constraint::PerfectSpecificity, opts)?,
        perfect_sensitivity: constrained_em_fit(data, Constraint::PerfectSensitivity, opts)?,
    })
}

/// Long-format row of `P(Y* = k | Y = j)` for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisclassRow {
    /// 1-based.
    pub subject: usize,
    pub y: u8,
    pub ystar: u8,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueClassRow {
    pub subject: usize,
    pub y: u8,
    pub probability: f64,
}

pub fn misclassification_prob(gamma: &[Vec<f64>; 2], z: &DesignMatrix) -> Result<Vec<MisclassRow>> {
    let table = compute_pistar(gamma, z)?;
    let mut rows = Vec::with_capacity(4 * table.probs.len());
    for (i, p) in table.probs.iter().enumerate() {
        for j in 0..2 {
            for k in 0..2 {
                rows.push(MisclassRow {
                    subject: i + 1,
                    y: j as u8 + 1,
                    ystar: k as u8 + 1,
                    probability: p[k][j],
                });
            }
        }
    }
    Ok(rows)
}

pub fn true_classification_prob(beta: &[f64], x: &DesignMatrix) -> Result<Vec<TrueClassRow>> {
    let pi = compute_pi(beta, x)?;
    Ok(pi
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            (0..2).map(move |j| TrueClassRow {
                subject: i + 1,
                y: j as u8 + 1,
                probability: p[j],
            })
        })
        .collect())
}

/// Grouped means of a misclassification table over `(y, ystar)`, in the
/// order (1,1), (1,2), (2,1), (2,2).
pub fn grouped_means(rows: &[MisclassRow]) -> Vec<(u8, u8, f64)> {
    let mut out = Vec::with_capacity(4);
    for y in 1..=2u8 {
        for ys in 1..=2u8 {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.y == y && r.ystar == ys)
                .map(|r| r.probability)
                .collect();
            out.push((y, ys, mean(&vals)));
        }
    }
    out
}
