//! Two sequential misclassified measurements `Y*(1)`, `Y*(2)` of one latent
//! binary `Y`, where the second measurement may depend on the first.

use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::em::{run_em, EmModel, EmOptions};
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_logistic, fit_weighted_logistic_from, GlmOptions};
use crate::math::{expit, mean};
use crate::numdiff::observed_information_se;
use crate::report::FitReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageParams {
    pub beta: Vec<f64>,
    /// `gamma1[j]`: `logit P(Y*(1) = 1 | Y = j + 1)`.
    pub gamma1: [Vec<f64>; 2],
    /// `gamma2[k][j]`: `logit P(Y*(2) = 1 | Y*(1) = k + 1, Y = j + 1)`.
    pub gamma2: [[Vec<f64>; 2]; 2],
}

/// Slice order of `gamma2` in flat vectors and tables: `(k, j)` with `k`
/// varying fastest.
const SLICES: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

impl TwoStageParams {
    pub fn zeros(px: usize, pz1: usize, pz2: usize) -> Self {
        let g2 = || [vec![0.0; pz2], vec![0.0; pz2]];
        TwoStageParams {
            beta: vec![0.0; px],
            gamma1: [vec![0.0; pz1], vec![0.0; pz1]],
            gamma2: [g2(), g2()],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.gamma1[0]);
        v.extend_from_slice(&self.gamma1[1]);
        for (k, j) in SLICES {
            v.extend_from_slice(&self.gamma2[k][j]);
        }
        v
    }

    pub fn from_slice(v: &[f64], px: usize, pz1: usize, pz2: usize) -> Result<Self> {
        let expected = px + 2 * pz1 + 4 * pz2;
        if v.len() != expected {
            return Err(Error::dim("two-stage parameter vector", expected, v.len()));
        }
        let mut out = TwoStageParams::zeros(px, pz1, pz2);
        out.beta.copy_from_slice(&v[..px]);
        out.gamma1[0].copy_from_slice(&v[px..px + pz1]);
        out.gamma1[1].copy_from_slice(&v[px + pz1..px + 2 * pz1]);
        let base = px + 2 * pz1;
        for (s, (k, j)) in SLICES.iter().enumerate() {
            out.gamma2[*k][*j].copy_from_slice(&v[base + s * pz2..base + (s + 1) * pz2]);
        }
        Ok(out)
    }

    /// `beta -> -beta`, first-stage columns swapped, second-stage slices
    /// swapped over the latent index.
    pub fn permuted(&self) -> Self {
        TwoStageParams {
            beta: self.beta.iter().map(|b| -b).collect(),
            gamma1: [self.gamma1[1].clone(), self.gamma1[0].clone()],
            gamma2: [
                [self.gamma2[0][1].clone(), self.gamma2[0][0].clone()],
                [self.gamma2[1][1].clone(), self.gamma2[1][0].clone()],
            ],
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.beta.len()).map(|i| format!("beta_{i}")).collect();
        for j in 1..=2 {
            for c in 1..=self.gamma1[0].len() {
                names.push(format!("gamma1_{c}{j}"));
            }
        }
        for (k, j) in SLICES {
            for c in 1..=self.gamma2[0][0].len() {
                names.push(format!("gamma2_{c}1{}{}", k + 1, j + 1));
            }
        }
        names
    }

    fn check(&self, data: &TwoStageData) -> Result<()> {
        if self.beta.len() != data.x.ncols() {
            return Err(Error::dim("beta", data.x.ncols(), self.beta.len()));
        }
        for col in &self.gamma1 {
            if col.len() != data.z1.ncols() {
                return Err(Error::dim("gamma1 column", data.z1.ncols(), col.len()));
            }
        }
        for (k, j) in SLICES {
            if self.gamma2[k][j].len() != data.z2.ncols() {
                return Err(Error::dim("gamma2 slice", data.z2.ncols(), self.gamma2[k][j].len()));
            }
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageData {
    pub ystar1: Vec<u8>,
    pub ystar2: Vec<u8>,
    pub x: DesignMatrix,
    pub z1: DesignMatrix,
    pub z2: DesignMatrix,
}

impl TwoStageData {
    pub fn new(ystar1: Vec<u8>, ystar2: Vec<u8>, x: DesignMatrix, z1: DesignMatrix, z2: DesignMatrix) -> Result<Self> {
        let n = ystar1.len();
        if n == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if ystar2.len() != n {
            return Err(Error::dim("second-stage outcome", n, ystar2.len()));
        }
        for (name, m) in [("X rows", &x), ("Z1 rows", &z1), ("Z2 rows", &z2)] {
            if m.nrows() != n {
                return Err(Error::dim(name, n, m.nrows()));
            }
        }
        if ystar1.iter().chain(&ystar2).any(|&k| k != 1 && k != 2) {
            return Err(Error::invalid("observed outcomes must be coded 1 or 2"));
        }
        Ok(TwoStageData {
            ystar1,
            ystar2,
            x,
            z1,
            z2,
        })
    }

    pub fn n(&self) -> usize {
        self.ystar1.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        TwoStageData {
            ystar1: rows.iter().map(|&i| self.ystar1[i]).collect(),
            ystar2: rows.iter().map(|&i| self.ystar2[i]).collect(),
            x: self.x.select_rows(rows),
            z1: self.z1.select_rows(rows),
            z2: self.z2.select_rows(rows),
        }
    }
}

/// Per-subject `P(Y*(2) = l | Y*(1) = k, Y = j)` as `[l][k][j]`.
pub fn compute_pitilde(gamma2: &[[Vec<f64>; 2]; 2], z2: &DesignMatrix) -> Result<Vec<[[[f64; 2]; 2]; 2]>> {
    let mut out = vec![[[[0.0; 2]; 2]; 2]; z2.nrows()];
    for (k, j) in SLICES {
        for (i, e) in z2.linear_predictor(&gamma2[k][j])?.into_iter().enumerate() {
            let p = expit(e);
            out[i][0][k][j] = p;
            out[i][1][k][j] = 1.0 - p;
        }
    }
    Ok(out)
}

/// Per-subject `P(Y=1)`, `P(Y*(1)=1 | j)` and `P(Y*(2)=1 | k, j)`.
struct StageProbs {
    pi: Vec<f64>,
    a1: Vec<[f64; 2]>,
    a2: Vec<[[f64; 2]; 2]>,
}

impl StageProbs {
    fn p1(&self, i: usize, k: u8, j: usize) -> f64 {
        if k == 1 {
            self.a1[i][j]
        } else {
            1.0 - self.a1[i][j]
        }
    }

    fn p2(&self, i: usize, l: u8, k: u8, j: usize) -> f64 {
        let a = self.a2[i][k as usize - 1][j];
        if l == 1 {
            a
        } else {
            1.0 - a
        }
    }

    fn prior(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            self.pi[i]
        } else {
            1.0 - self.pi[i]
        }
    }

    fn joint(&self, i: usize, k: u8, l: u8, j: usize) -> f64 {
        self.prior(i, j) * self.p1(i, k, j) * self.p2(i, l, k, j)
    }
}

struct TwoStageModel<'a> {
    data: &'a TwoStageData,
    px: usize,
    pz1: usize,
    pz2: usize,
    event1: Vec<f64>,
    /// Row indices with `Y*(1) = k + 1`.
    strata: [Vec<usize>; 2],
    strata_z2: [DesignMatrix; 2],
    strata_event2: [Vec<f64>; 2],
    glm: GlmOptions,
}

impl<'a> TwoStageModel<'a> {
    fn new(data: &'a TwoStageData) -> Self {
        let strata: [Vec<usize>; 2] =
            [1u8, 2].map(|k| (0..data.n()).filter(|&i| data.ystar1[i] == k).collect());
        let strata_z2 = [data.z2.select_rows(&strata[0]), data.z2.select_rows(&strata[1])];
        let strata_event2 = [0, 1].map(|s| {
            strata[s]
                .iter()
                .map(|&i| if data.ystar2[i] == 1 { 1.0 } else { 0.0 })
                .collect()
        });
        TwoStageModel {
            data,
            px: data.x.ncols(),
            pz1: data.z1.ncols(),
            pz2: data.z2.ncols(),
            event1: data.ystar1.iter().map(|&k| if k == 1 { 1.0 } else { 0.0 }).collect(),
            strata,
            strata_z2,
            strata_event2,
            glm: GlmOptions::default(),
        }
    }

    fn probs(&self, theta: &[f64]) -> Result<StageProbs> {
        let (px, pz1, pz2) = (self.px, self.pz1, self.pz2);
        let n = self.data.n();
        let pi = self
            .data
            .x
            .linear_predictor(&theta[..px])?
            .into_iter()
            .map(expit)
            .collect();
        let mut a1 = vec![[0.0; 2]; n];
        for j in 0..2 {
            let g = &theta[px + j * pz1..px + (j + 1) * pz1];
            for (i, e) in self.data.z1.linear_predictor(g)?.into_iter().enumerate() {
                a1[i][j] = expit(e);
            }
        }
        let mut a2 = vec![[[0.0; 2]; 2]; n];
        let base = px + 2 * pz1;
        for (s, (k, j)) in SLICES.iter().enumerate() {
            let g = &theta[base + s * pz2..base + (s + 1) * pz2];
            for (i, e) in self.data.z2.linear_predictor(g)?.into_iter().enumerate() {
                a2[i][*k][*j] = expit(e);
            }
        }
        Ok(StageProbs { pi, a1, a2 })
    }

    fn weights(&self, theta: &[f64]) -> Result<Vec<[f64; 2]>> {
        let sp = self.probs(theta)?;
        (0..self.data.n())
            .map(|i| {
                let (k, l) = (self.data.ystar1[i], self.data.ystar2[i]);
                let n1 = sp.joint(i, k, l, 0);
                let n2 = sp.joint(i, k, l, 1);
                let den = n1 + n2;
                if !(den > 0.0) || !den.is_finite() {
                    return Err(Error::Numerical(format!(
                        "E-step denominator underflow at subject {}",
                        i + 1
                    )));
                }
                Ok([n1 / den, n2 / den])
            })
            .collect()
    }
}

impl EmModel for TwoStageModel<'_> {
    fn em_step(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(theta)?;
        let (px, pz1, pz2) = (self.px, self.pz1, self.pz2);
        let w1: Vec<f64> = w.iter().map(|r| r[0]).collect();
        let ones = vec![1.0; w.len()];
        let mut next = fit_weighted_logistic_from(&self.data.x, &w1, &ones, Some(&theta[..px]), self.glm)?.coefficients;
        for j in 0..2 {
            let wj: Vec<f64> = w.iter().map(|r| r[j]).collect();
            let start = &theta[px + j * pz1..px + (j + 1) * pz1];
            let fit = fit_weighted_logistic_from(&self.data.z1, &self.event1, &wj, Some(start), self.glm)?;
            next.extend(fit.coefficients);
        }
        let base = px + 2 * pz1;
        for (s, &(k, j)) in SLICES.iter().enumerate() {
            let start = &theta[base + s * pz2..base + (s + 1) * pz2];
            if self.strata[k].is_empty() {
                next.extend_from_slice(start);
                continue;
            }
            let wj: Vec<f64> = self.strata[k].iter().map(|&i| w[i][j]).collect();
            let fit = fit_weighted_logistic_from(
                &self.strata_z2[k],
                &self.strata_event2[k],
                &wj,
                Some(start),
                self.glm,
            )?;
            next.extend(fit.coefficients);
        }
        Ok(next)
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        let Ok(sp) = self.probs(theta) else {
            return f64::NEG_INFINITY;
        };
        (0..self.data.n())
            .map(|i| {
                let (k, l) = (self.data.ystar1[i], self.data.ystar2[i]);
                (sp.joint(i, k, l, 0) + sp.joint(i, k, l, 1)).ln()
            })
            .sum()
    }
}

/// Per-subject `P(Y*(1) = k, Y*(2) = l)` as `[k][l]`.
pub fn joint_obs_prob(params: &TwoStageParams, data: &TwoStageData) -> Result<Vec<[[f64; 2]; 2]>> {
    params.check(data)?;
    let model = TwoStageModel::new(data);
    let sp = model.probs(&params.to_vec())?;
    Ok((0..data.n())
        .map(|i| {
            let mut cells = [[0.0; 2]; 2];
            for k in 1..=2u8 {
                for l in 1..=2u8 {
                    cells[k as usize - 1][l as usize - 1] = sp.joint(i, k, l, 0) + sp.joint(i, k, l, 1);
                }
            }
            cells
        })
        .collect())
}

pub fn observed_loglik_2stage(params: &TwoStageParams, data: &TwoStageData) -> Result<f64> {
    params.check(data)?;
    Ok(TwoStageModel::new(data).loglik(&params.to_vec()))
}

pub fn e_step_weights_2stage(params: &TwoStageParams, data: &TwoStageData) -> Result<Vec<[f64; 2]>> {
    params.check(data)?;
    TwoStageModel::new(data).weights(&params.to_vec())
}

/// Mean first-stage `(sensitivity, specificity)`.
pub fn first_stage_accuracy(gamma1: &[Vec<f64>; 2], z1: &DesignMatrix) -> Result<(f64, f64)> {
    let t = crate::single::compute_pistar(gamma1, z1)?;
    Ok((t.sensitivity, t.specificity))
}

/// Mean second-stage `(sensitivity, specificity)`, marginal over `Y*(1)`.
pub fn second_stage_accuracy(params: &TwoStageParams, data: &TwoStageData) -> Result<(f64, f64)> {
    params.check(data)?;
    let sp = TwoStageModel::new(data).probs(&params.to_vec())?;
    let n = data.n();
    let sens: Vec<f64> = (0..n)
        .map(|i| (1..=2u8).map(|k| sp.p2(i, 1, k, 0) * sp.p1(i, k, 0)).sum())
        .collect();
    let spec: Vec<f64> = (0..n)
        .map(|i| (1..=2u8).map(|k| sp.p2(i, 2, k, 1) * sp.p1(i, k, 1)).sum())
        .collect();
    Ok((mean(&sens), mean(&spec)))
}

pub fn label_switch_correct_2stage(params: &TwoStageParams, z1: &DesignMatrix) -> Result<(TwoStageParams, bool)> {
    let (s, p) = first_stage_accuracy(&params.gamma1, z1)?;
    let permuted = params.permuted();
    let (ps, pp) = first_stage_accuracy(&permuted.gamma1, z1)?;
    if ps + pp > s + p {
        Ok((permuted, true))
    } else {
        Ok((params.clone(), false))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageFit {
    pub params: TwoStageParams,
    pub report: FitReport,
    /// Rows `naive_beta_*` and `naive_gamma2_*`.
    pub naive: FitReport,
    pub second_stage_sensitivity: f64,
    pub second_stage_specificity: f64,
    pub loglik_path: Vec<f64>,
}

/// Independent logistic fits ignoring the latent class: `Y*(1)` on `X`, and
/// `Y*(2)` on `Z2` within each `Y*(1)` stratum.
pub fn naive_fit_2stage(data: &TwoStageData) -> Result<FitReport> {
    let mut report = FitReport::new("naive");
    let ones = vec![1.0; data.n()];
    let event1: Vec<f64> = data.ystar1.iter().map(|&k| if k == 1 { 1.0 } else { 0.0 }).collect();
    let fb = fit_weighted_logistic(&data.x, &event1, &ones)?;
    let names: Vec<String> = (1..=data.x.ncols()).map(|i| format!("naive_beta_{i}")).collect();
    report.push_rows(&names, &fb.coefficients, &fb.standard_errors(), Some(fb.converged));
    let mut converged = fb.converged;
    for k in 1..=2u8 {
        let rows: Vec<usize> = (0..data.n()).filter(|&i| data.ystar1[i] == k).collect();
        let names: Vec<String> = (1..=data.z2.ncols()).map(|c| format!("naive_gamma2_{c}{k}")).collect();
        if rows.is_empty() {
            let nan = vec![f64::NAN; names.len()];
            report.push_rows(&names, &nan, &nan, Some(false));
            converged = false;
            continue;
        }
        let z = data.z2.select_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|&i| if data.ystar2[i] == 1 { 1.0 } else { 0.0 }).collect();
        let fit = fit_weighted_logistic(&z, &y, &vec![1.0; rows.len()])?;
        report.push_rows(&names, &fit.coefficients, &fit.standard_errors(), Some(fit.converged));
        converged &= fit.converged;
    }
    report.converged = converged;
    Ok(report)
}

pub fn em_fit_2stage(data: &TwoStageData, start: Option<&TwoStageParams>, opts: &EmOptions) -> Result<TwoStageFit> {
    let (px, pz1, pz2) = (data.x.ncols(), data.z1.ncols(), data.z2.ncols());
    let start = match start {
        Some(s) => {
            s.check(data)?;
            s.clone()
        }
        None => {
            let mut s = TwoStageParams::zeros(px, pz1, pz2);
            let ones = vec![1.0; data.n()];
            let event1: Vec<f64> = data.ystar1.iter().map(|&k| if k == 1 { 1.0 } else { 0.0 }).collect();
            s.beta = fit_weighted_logistic(&data.x, &event1, &ones)?.coefficients;
            s
        }
    };
    let model = TwoStageModel::new(data);
    let trace = run_em(&model, &start.to_vec(), opts)?;
    let raw = TwoStageParams::from_slice(&trace.params, px, pz1, pz2)?;
    let (params, applied) = label_switch_correct_2stage(&raw, &data.z1)?;
    let theta = params.to_vec();
    let ses = if opts.compute_se {
        observed_information_se(|t| model.loglik(t), &theta)
    } else {
        vec![f64::NAN; theta.len()]
    };
    let (sens, spec) = first_stage_accuracy(&params.gamma1, &data.z1)?;
    let (sens2, spec2) = second_stage_accuracy(&params, data)?;
    let mut report = FitReport::new("combo-em-2stage");
    report.push_rows(&params.names(), &theta, &ses, Some(trace.converged));
    report.converged = trace.converged;
    report.loglik = Some(model.loglik(&theta));
    report.iterations = trace.iterations;
    report.label_correction_applied = applied;
    report.sensitivity = Some(sens);
    report.specificity = Some(spec);
    Ok(TwoStageFit {
        params,
        report,
        naive: naive_fit_2stage(data)?,
        second_stage_sensitivity: sens2,
        second_stage_specificity: spec2,
        loglik_path: trace.loglik_path,
    })
}
