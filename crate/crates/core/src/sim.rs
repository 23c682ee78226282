//! Seeded generators for the three model families.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::{clamp_eta, expit};
use crate::mediation::{MediationData, MediationParams, OutcomeDist};
use crate::single::{SingleOutcomeData, SingleOutcomeParams};
use crate::twostage::{TwoStageData, TwoStageParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CovariateSpec {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl CovariateSpec {
    pub fn standard_normal() -> Self {
        CovariateSpec::Normal { mean: 0.0, sd: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CovariateSpec::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd >= 0.0 => Ok(()),
            CovariateSpec::Bernoulli { p } if (0.0..=1.0).contains(&p) => Ok(()),
            other => Err(Error::invalid(format!("invalid covariate spec {other:?}"))),
        }
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            CovariateSpec::Normal { mean, sd } => {
                let d = Normal::new(mean, sd).expect("validated");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            CovariateSpec::Bernoulli { p } => (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < p))).collect(),
        }
    }
}

/// Parses `normal(mean,sd)` or `bernoulli(p)`.
impl std::str::FromStr for CovariateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("cannot parse covariate spec `{s}`"));
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<f64> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let spec = match (name.trim(), args.as_slice()) {
            ("normal", [m, sd]) => CovariateSpec::Normal { mean: *m, sd: *sd },
            ("bernoulli", [p]) => CovariateSpec::Bernoulli { p: *p },
            _ => return Err(bad()),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Named numeric columns, ready to be written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl SimTable {
    fn push(&mut self, name: impl Into<String>, col: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(col);
    }

    fn push_codes(&mut self, name: &str, codes: &[u8]) {
        self.push(name, codes.iter().map(|&c| f64::from(c)).collect());
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

fn draw_block(specs: &[CovariateSpec], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    specs.iter().try_for_each(CovariateSpec::validate)?;
    Ok(specs.iter().map(|s| s.draw(n, rng)).collect())
}

/// 1 with probability `p`, else 2.
fn draw_code(p: f64, rng: &mut ChaCha8Rng) -> u8 {
    if rng.random::<f64>() < p {
        1
    } else {
        2
    }
}

fn check_len(name: &'static str, coef: &[f64], specs: &[CovariateSpec]) -> Result<()> {
    if coef.len() != specs.len() + 1 {
        return Err(Error::dim(name, specs.len() + 1, coef.len()));
    }
    Ok(())
}

fn seeded(seed: u64, n: usize) -> Result<ChaCha8Rng> {
    if n == 0 {
        return Err(Error::invalid("simulation needs N >= 1"));
    }
    Ok(ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSim {
    pub y: Vec<u8>,
    pub x_cols: Vec<Vec<f64>>,
    pub z_cols: Vec<Vec<f64>>,
    pub data: SingleOutcomeData,
}

impl SingleSim {
    /// Columns `x1.., z1.., y, ystar`.
    pub fn table(&self) -> SimTable {
        let mut t = SimTable {
            names: vec![],
            columns: vec![],
        };
        for (k, c) in self.x_cols.iter().enumerate() {
            t.push(format!("x{}", k + 1), c.clone());
        }
        for (k, c) in self.z_cols.iter().enumerate() {
            t.push(format!("z{}", k + 1), c.clone());
        }
        t.push_codes("y", &self.y);
        t.push_codes("ystar", &self.data.ystar);
        t
    }
}

pub fn simulate_single(
    n: usize,
    params: &SingleOutcomeParams,
    x_specs: &[CovariateSpec],
    z_specs: &[CovariateSpec],
    seed: u64,
) -> Result<SingleSim> {
    check_len("beta", &params.beta, x_specs)?;
    check_len("gamma column", &params.gamma[0], z_specs)?;
    check_len("gamma column", &params.gamma[1], z_specs)?;
    let mut rng = seeded(seed, n)?;
    let x_cols = draw_block(x_specs, n, &mut rng)?;
    let z_cols = draw_block(z_specs, n, &mut rng)?;
    let x = DesignMatrix::from_columns(n, &x_cols)?;
    let z = DesignMatrix::from_columns(n, &z_cols)?;
    let eta = x.linear_predictor(&params.beta)?;
    let obs = [z.linear_predictor(&params.gamma[0])?, z.linear_predictor(&params.gamma[1])?];
    let mut y = Vec::with_capacity(n);
    let mut ystar = Vec::with_capacity(n);
    for i in 0..n {
        let yi = draw_code(expit(eta[i]), &mut rng);
        let ys = draw_code(expit(obs[yi as usize - 1][i]), &mut rng);
        y.push(yi);
        ystar.push(ys);
    }
    Ok(SingleSim {
        y,
        x_cols,
        z_cols,
        data: SingleOutcomeData::new(ystar, x, z)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageSim {
    pub y: Vec<u8>,
    pub x_cols: Vec<Vec<f64>>,
    pub z1_cols: Vec<Vec<f64>>,
    pub z2_cols: Vec<Vec<f64>>,
    pub data: TwoStageData,
}

impl TwoStageSim {
    /// Columns `x1.., z1_1.., z2_1.., y, ystar1, ystar2`.
    pub fn table(&self) -> SimTable {
        let mut t = SimTable {
            names: vec![],
            columns: vec![],
        };
        for (k, c) in self.x_cols.iter().enumerate() {
            t.push(format!("x{}", k + 1), c.clone());
        }
        for (k, c) in self.z1_cols.iter().enumerate() {
            t.push(format!("z1_{}", k + 1), c.clone());
        }
        for (k, c) in self.z2_cols.iter().enumerate() {
            t.push(format!("z2_{}", k + 1), c.clone());
        }
        t.push_codes("y", &self.y);
        t.push_codes("ystar1", &self.data.ystar1);
        t.push_codes("ystar2", &self.data.ystar2);
        t
    }
}

pub fn simulate_twostage(
    n: usize,
    params: &TwoStageParams,
    x_specs: &[CovariateSpec],
    z1_specs: &[CovariateSpec],
    z2_specs: &[CovariateSpec],
    seed: u64,
) -> Result<TwoStageSim> {
    check_len("beta", &params.beta, x_specs)?;
    for g in &params.gamma1 {
        check_len("gamma1 column", g, z1_specs)?;
    }
    for g in params.gamma2.iter().flatten() {
        check_len("gamma2 slice", g, z2_specs)?;
    }
    let mut rng = seeded(seed, n)?;
    let x_cols = draw_block(x_specs, n, &mut rng)?;
    let z1_cols = draw_block(z1_specs, n, &mut rng)?;
    let z2_cols = draw_block(z2_specs, n, &mut rng)?;
    let x = DesignMatrix::from_columns(n, &x_cols)?;
    let z1 = DesignMatrix::from_columns(n, &z1_cols)?;
    let z2 = DesignMatrix::from_columns(n, &z2_cols)?;
    let eta = x.linear_predictor(&params.beta)?;
    let e1 = [z1.linear_predictor(&params.gamma1[0])?, z1.linear_predictor(&params.gamma1[1])?];
    let mut e2 = vec![vec![Vec::new(); 2]; 2];
    for k in 0..2 {
        for j in 0..2 {
            e2[k][j] = z2.linear_predictor(&params.gamma2[k][j])?;
        }
    }
    let (mut y, mut y1, mut y2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let yi = draw_code(expit(eta[i]), &mut rng);
        let j = yi as usize - 1;
        let k = draw_code(expit(e1[j][i]), &mut rng);
        let l = draw_code(expit(e2[k as usize - 1][j][i]), &mut rng);
        y.push(yi);
        y1.push(k);
        y2.push(l);
    }
    Ok(TwoStageSim {
        y,
        x_cols,
        z1_cols,
        z2_cols,
        data: TwoStageData::new(y1, y2, x, z1, z2)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediationSim {
    pub m: Vec<u8>,
    pub z_cols: Vec<Vec<f64>>,
    pub data: MediationData,
}

impl MediationSim {
    /// Columns `x, c1.., z1.., m, mstar, y`.
    pub fn table(&self) -> SimTable {
        let mut t = SimTable {
            names: vec![],
            columns: vec![],
        };
        t.push("x", self.data.x.clone());
        for (k, c) in self.data.c.iter().enumerate() {
            t.push(format!("c{}", k + 1), c.clone());
        }
        for (k, c) in self.z_cols.iter().enumerate() {
            t.push(format!("z{}", k + 1), c.clone());
        }
        t.push_codes("m", &self.m);
        t.push_codes("mstar", &self.data.mstar);
        t.push("y", self.data.y.clone());
        t
    }
}

pub fn simulate_mediation(
    n: usize,
    params: &MediationParams,
    x_spec: CovariateSpec,
    c_specs: &[CovariateSpec],
    z_specs: &[CovariateSpec],
    seed: u64,
) -> Result<MediationSim> {
    if params.beta.len() != c_specs.len() + 2 {
        return Err(Error::dim("beta", c_specs.len() + 2, params.beta.len()));
    }
    check_len("gamma column", &params.gamma[0], z_specs)?;
    check_len("gamma column", &params.gamma[1], z_specs)?;
    let pt = MediationParams::theta_len(c_specs.len(), params.interaction);
    if params.theta.len() != pt {
        return Err(Error::dim("theta", pt, params.theta.len()));
    }
    let sigma = match params.dist {
        OutcomeDist::Normal => params
            .sigma
            .filter(|s| *s >= 0.0 && s.is_finite())
            .ok_or_else(|| Error::invalid("normal outcomes need sigma >= 0"))?,
        _ => 0.0,
    };
    let mut rng = seeded(seed, n)?;
    let x = draw_block(&[x_spec], n, &mut rng)?.remove(0);
    let c = draw_block(c_specs, n, &mut rng)?;
    let z_cols = draw_block(z_specs, n, &mut rng)?;
    let z = DesignMatrix::from_columns(n, &z_cols)?;
    let mut mcols = vec![x.clone()];
    mcols.extend(c.iter().cloned());
    let eta_m = DesignMatrix::from_columns(n, &mcols)?.linear_predictor(&params.beta)?;
    let obs = [z.linear_predictor(&params.gamma[0])?, z.linear_predictor(&params.gamma[1])?];
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("validated");
    let (mut m, mut mstar, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let mi = draw_code(expit(eta_m[i]), &mut rng);
        let ms = draw_code(expit(obs[mi as usize - 1][i]), &mut rng);
        let mnum = if mi == 1 { 1.0 } else { 0.0 };
        let t = &params.theta;
        let mut eta = t[0] + t[1] * x[i] + t[2] * mnum;
        for (k, col) in c.iter().enumerate() {
            eta += t[3 + k] * col[i];
        }
        if params.interaction {
            eta += t[pt - 1] * x[i] * mnum;
        }
        let yi = match params.dist {
            OutcomeDist::Normal => eta + normal.sample(&mut rng),
            OutcomeDist::Bernoulli => f64::from(u8::from(rng.random::<f64>() < expit(eta))),
            OutcomeDist::Poisson => {
                let lambda = clamp_eta(eta).exp();
                Poisson::new(lambda)
                    .map_err(|e| Error::Numerical(format!("Poisson rate {lambda}: {e}")))?
                    .sample(&mut rng)
            }
        };
        m.push(mi);
        mstar.push(ms);
        y.push(yi);
    }
    Ok(MediationSim {
        m,
        z_cols,
        data: MediationData::new(mstar, y, x, c, z)?,
    })
}
