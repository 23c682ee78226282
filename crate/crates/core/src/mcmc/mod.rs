//! Blocked adaptive random-walk Metropolis for the one- and two-stage
//! outcome models.

mod diagnostics;
mod prior;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{batch_means_mcse, pooled_median, split_rhat};
pub use prior::{Prior, PriorSpec};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::mean;
use crate::single::{compute_pistar, naive_beta, observed_loglik, SingleOutcomeData, SingleOutcomeParams};
use crate::twostage::{
    compute_pitilde, first_stage_accuracy, naive_fit_2stage, observed_loglik_2stage, TwoStageData, TwoStageParams,
};
use crate::single::compute_pi;

const TARGET_ACCEPTANCE: f64 = 0.3;
const ADAPT_WINDOW: usize = 25;
const COV_EVERY: usize = 100;
/// Stream offset separating naive-model chains from the main chains.
const NAIVE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum McmcInit {
    /// Independent draws from the prior.
    Prior,
    /// Naive logistic fit for the outcome coefficients and observation
    /// intercepts of `±2` favouring accurate classification, jittered per chain.
    #[default]
    Naive,
    /// A flat parameter vector shared by every chain.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TwoStageLikelihood {
    /// Independent Bernoulli terms for `Y*(1)` and the marginal of `Y*(2)`.
    #[default]
    StageMarginal,
    /// The full joint distribution of `(Y*(1), Y*(2))`.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub n_chains: usize,
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init: McmcInit,
    pub two_stage_likelihood: TwoStageLikelihood,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_samples: 1000,
            burn_in: 500,
            seed: 0,
            init: McmcInit::Naive,
            two_stage_likelihood: TwoStageLikelihood::StageMarginal,
        }
    }
}

impl McmcOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::invalid("at least one chain is required"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("at least two posterior samples are required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    pub names: Vec<String>,
    /// `chains[c][s]` is draw `s` of chain `c` as a flat parameter vector.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub n_samples: usize,
    pub burn_in: usize,
    /// Post-burn-in acceptance rate per chain and block.
    pub acceptance: Vec<Vec<f64>>,
    pub label_correction_applied: Vec<bool>,
}

impl ChainSet {
    /// Draws of parameter `k` split by chain.
    pub fn trace(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|d| d[k]).collect()).collect()
    }

    pub fn summarize(&self) -> Vec<PosteriorSummary> {
        (0..self.names.len())
            .map(|k| {
                let tr = self.trace(k);
                let all: Vec<f64> = tr.iter().flatten().copied().collect();
                let mu = mean(&all);
                PosteriorSummary {
                    name: self.names[k].clone(),
                    mean: mu,
                    median: pooled_median(&tr),
                    sd: crate::math::sample_sd(&all),
                    mcse: batch_means_mcse(&tr),
                    rhat: split_rhat(&tr),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub mcse: f64,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcFit {
    pub method: String,
    pub chains: ChainSet,
    pub summary: Vec<PosteriorSummary>,
    pub naive_chains: ChainSet,
    pub naive_summary: Vec<PosteriorSummary>,
}

type LogLik<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

struct Target<'a> {
    names: Vec<String>,
    blocks: Vec<Range<usize>>,
    prior: &'a PriorSpec,
    loglik: LogLik<'a>,
}

impl Target<'_> {
    fn log_post(&self, theta: &[f64]) -> f64 {
        let lp = self.prior.ln_density_unchecked(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let ll = (self.loglik)(theta);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp + ll
        }
    }
}

struct BlockState {
    range: Range<usize>,
    log_scale: f64,
    chol: DMatrix<f64>,
    window_accepts: usize,
    accepts: usize,
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    acceptance: Vec<f64>,
}

fn block_cov_chol(history: &[Vec<f64>], range: &Range<usize>) -> Option<DMatrix<f64>> {
    let d = range.len();
    let n = history.len();
    if n < 2 * d + 2 {
        return None;
    }
    let means: Vec<f64> = range.clone().map(|k| history.iter().map(|h| h[k]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(d, d);
    for h in history {
        let dv = DVector::from_iterator(d, range.clone().zip(&means).map(|(k, m)| h[k] - m));
        cov += &dv * dv.transpose();
    }
    cov /= (n - 1) as f64;
    for i in 0..d {
        cov[(i, i)] += 1e-8 + 1e-6 * cov[(i, i)];
    }
    cov.cholesky().map(|c| c.l())
}

fn run_chain(target: &Target<'_>, init: Vec<f64>, burn_in: usize, n_samples: usize, mut rng: ChaCha8Rng) -> Result<ChainOutput> {
    let mut theta = init;
    let mut lp = target.log_post(&theta);
    if !lp.is_finite() {
        return Err(Error::Sampler("log posterior is not finite at the initial values".into()));
    }
    let mut blocks: Vec<BlockState> = target
        .blocks
        .iter()
        .map(|r| BlockState {
            range: r.clone(),
            log_scale: (0.1f64).ln(),
            chol: DMatrix::identity(r.len(), r.len()),
            window_accepts: 0,
            accepts: 0,
        })
        .collect();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(burn_in);
    let mut draws = Vec::with_capacity(n_samples);
    let mut proposal = theta.clone();
    for it in 0..burn_in + n_samples {
        let adapting = it < burn_in;
        for b in blocks.iter_mut() {
            let d = b.range.len();
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let step = &b.chol * DVector::from_vec(z) * b.log_scale.exp();
            proposal.copy_from_slice(&theta);
            for (off, k) in b.range.clone().enumerate() {
                proposal[k] += step[off];
            }
            let lp_new = target.log_post(&proposal);
            let u: f64 = rng.random::<f64>();
            if lp_new.is_finite() && u.ln() < lp_new - lp {
                theta.copy_from_slice(&proposal);
                lp = lp_new;
                if adapting {
                    b.window_accepts += 1;
                } else {
                    b.accepts += 1;
                }
            }
        }
        if adapting {
            history.push(theta.clone());
            let done = it + 1;
            if done % ADAPT_WINDOW == 0 {
                for b in blocks.iter_mut() {
                    let rate = b.window_accepts as f64 / ADAPT_WINDOW as f64;
                    b.log_scale += 1.5 * (rate - TARGET_ACCEPTANCE);
                    b.window_accepts = 0;
                }
            }
            if done % COV_EVERY == 0 && done >= 2 * COV_EVERY && done + COV_EVERY <= burn_in {
                let recent = &history[done / 2..];
                for b in blocks.iter_mut() {
                    if let Some(l) = block_cov_chol(recent, &b.range) {
                        let first = b.chol.nrows() == b.chol.ncols() && b.chol == DMatrix::identity(b.range.len(), b.range.len());
                        b.chol = l;
                        if first {
                            b.log_scale = (2.38 / (b.range.len() as f64).sqrt()).ln();
                        }
                    }
                }
            }
        } else {
            draws.push(theta.clone());
        }
    }
    let acceptance: Vec<f64> = blocks.iter().map(|b| b.accepts as f64 / n_samples as f64).collect();
    if acceptance.contains(&0.0) {
        return Err(Error::Sampler("a parameter block accepted no proposals after burn-in".into()));
    }
    Ok(ChainOutput { draws, acceptance })
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn initial_values(
    target: &Target<'_>,
    init: &McmcInit,
    naive_start: &dyn Fn() -> Result<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dim = target.prior.entries.len();
    let mut v = match init {
        McmcInit::Prior => return Ok(target.prior.sample(rng)),
        McmcInit::Given(v) => {
            if v.len() != dim {
                return Err(Error::dim("initial values", dim, v.len()));
            }
            return Ok(v.clone());
        }
        McmcInit::Naive => naive_start()?,
    };
    for (x, p) in v.iter_mut().zip(&target.prior.entries) {
        let jitter: f64 = rng.sample(StandardNormal);
        *x += 0.1 * jitter;
        if !p.in_support(*x) {
            *x = p.sample(rng);
        }
    }
    Ok(v)
}

fn sample_target(
    target: &Target<'_>,
    opts: &McmcOptions,
    stream_offset: u64,
    naive_start: &(dyn Fn() -> Result<Vec<f64>> + Sync),
    correct: &(dyn Fn(&mut [Vec<f64>]) -> Result<bool> + Sync),
) -> Result<ChainSet> {
    let outputs: Vec<Result<(ChainOutput, bool)>> = (0..opts.n_chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(opts.seed, stream_offset + c);
            let init = initial_values(target, &opts.init, naive_start, &mut rng)?;
            let mut out = run_chain(target, init, opts.burn_in, opts.n_samples, rng)?;
            let applied = correct(&mut out.draws)?;
            Ok((out, applied))
        })
        .collect();
    let mut chains = Vec::with_capacity(opts.n_chains);
    let mut acceptance = Vec::with_capacity(opts.n_chains);
    let mut applied = Vec::with_capacity(opts.n_chains);
    for o in outputs {
        let (out, a) = o?;
        chains.push(out.draws);
        acceptance.push(out.acceptance);
        applied.push(a);
    }
    Ok(ChainSet {
        names: target.names.clone(),
        chains,
        n_samples: opts.n_samples,
        burn_in: opts.burn_in,
        acceptance,
        label_correction_applied: applied,
    })
}

fn chain_mean(chain: &[Vec<f64>]) -> Vec<f64> {
    let d = chain[0].len();
    (0..d).map(|k| chain.iter().map(|v| v[k]).sum::<f64>() / chain.len() as f64).collect()
}

/// Applies the single-outcome label permutation to every draw when the
/// chain's posterior-mean classifier has negative average Youden's J.
pub fn chain_label_correct_single(chain: &mut [Vec<f64>], px: usize, z: &DesignMatrix) -> Result<bool> {
    if chain.is_empty() {
        return Err(Error::invalid("empty chain"));
    }
    let pz = z.ncols();
    let m = SingleOutcomeParams::from_slice(&chain_mean(chain), px, pz)?;
    if compute_pistar(&m.gamma, z)?.youden_j() >= 0.0 {
        return Ok(false);
    }
    for d in chain.iter_mut() {
        *d = SingleOutcomeParams::from_slice(d, px, pz)?.permuted().to_vec();
    }
    Ok(true)
}

/// Two-stage analogue of [`chain_label_correct_single`] using first-stage J.
pub fn chain_label_correct_2stage(chain: &mut [Vec<f64>], px: usize, z1: &DesignMatrix, pz2: usize) -> Result<bool> {
    if chain.is_empty() {
        return Err(Error::invalid("empty chain"));
    }
    let pz1 = z1.ncols();
    let m = TwoStageParams::from_slice(&chain_mean(chain), px, pz1, pz2)?;
    let (sens, spec) = first_stage_accuracy(&m.gamma1, z1)?;
    if sens + spec - 1.0 >= 0.0 {
        return Ok(false);
    }
    for d in chain.iter_mut() {
        *d = TwoStageParams::from_slice(d, px, pz1, pz2)?.permuted().to_vec();
    }
    Ok(true)
}

fn ln_expit(eta: f64) -> f64 {
    // log(1 / (1 + e^-eta)), stable for both signs.
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

fn logistic_loglik(x: &DesignMatrix, rows: Option<&[usize]>, y1: &dyn Fn(usize) -> bool, coef: &[f64]) -> f64 {
    let p = x.ncols();
    let eval = |i: usize| {
        let eta: f64 = (0..p).map(|c| x.get(i, c) * coef[c]).sum();
        if y1(i) {
            ln_expit(eta)
        } else {
            ln_expit(-eta)
        }
    };
    match rows {
        Some(r) => r.iter().map(|&i| eval(i)).sum(),
        None => (0..x.nrows()).map(eval).sum(),
    }
}

/// Intercept-led starting values favouring accurate classification.
fn accurate_gamma_start(pz: usize, j: usize) -> Vec<f64> {
    let mut g = vec![0.0; pz];
    g[0] = if j == 0 { 2.0 } else { -2.0 };
    g
}

fn bracket_names(prefix: &str, idx: &[Vec<usize>]) -> Vec<String> {
    idx.iter()
        .map(|ix| {
            let inner: Vec<String> = ix.iter().map(|i| i.to_string()).collect();
            format!("{prefix}[1,{}]", inner.join(","))
        })
        .collect()
}

fn single_names(px: usize, pz: usize) -> Vec<String> {
    let mut n = bracket_names("beta", &(1..=px).map(|c| vec![c]).collect::<Vec<_>>());
    let g: Vec<Vec<usize>> = (1..=2).flat_map(|j| (1..=pz).map(move |c| vec![c, j])).collect();
    n.extend(bracket_names("gamma", &g));
    n
}

fn twostage_names(px: usize, pz1: usize, pz2: usize) -> Vec<String> {
    let mut n = bracket_names("beta", &(1..=px).map(|c| vec![c]).collect::<Vec<_>>());
    let g1: Vec<Vec<usize>> = (1..=2).flat_map(|j| (1..=pz1).map(move |c| vec![c, j])).collect();
    n.extend(bracket_names("gamma1", &g1));
    let g2: Vec<Vec<usize>> = (1..=2)
        .flat_map(|j| (1..=2).flat_map(move |k| (1..=pz2).map(move |c| vec![c, k, j])))
        .collect();
    n.extend(bracket_names("gamma2", &g2));
    n
}

pub fn mcmc_fit_single(data: &SingleOutcomeData, prior: &PriorSpec, opts: &McmcOptions) -> Result<McmcFit> {
    opts.validate()?;
    let (px, pz) = (data.x.ncols(), data.z.ncols());
    let dim = px + 2 * pz;
    prior.validate(dim)?;
    let target = Target {
        names: single_names(px, pz),
        blocks: vec![0..px, px..px + pz, px + pz..dim],
        prior,
        loglik: Box::new(move |t: &[f64]| {
            SingleOutcomeParams::from_slice(t, px, pz)
                .and_then(|p| observed_loglik(&p, data))
                .unwrap_or(f64::NAN)
        }),
    };
    let naive_coef = || naive_beta(data);
    let start = || -> Result<Vec<f64>> {
        let mut v = naive_coef()?;
        v.extend(accurate_gamma_start(pz, 0));
        v.extend(accurate_gamma_start(pz, 1));
        Ok(v)
    };
    let correct = |c: &mut [Vec<f64>]| chain_label_correct_single(c, px, &data.z);
    let chains = sample_target(&target, opts, 0, &start, &correct)?;

    let naive_prior = PriorSpec { entries: prior.entries[..px].to_vec() };
    let naive_target = Target {
        names: bracket_names("naive_beta", &(1..=px).map(|c| vec![c]).collect::<Vec<_>>()),
        blocks: std::iter::once(0..px).collect(),
        prior: &naive_prior,
        loglik: Box::new(move |b: &[f64]| logistic_loglik(&data.x, None, &|i| data.ystar[i] == 1, b)),
    };
    let naive_opts = McmcOptions { init: naive_init(&opts.init, px), ..opts.clone() };
    let naive_chains = sample_target(&naive_target, &naive_opts, NAIVE_STREAM, &naive_coef, &|_| Ok(false))?;
    Ok(finish("combo-mcmc", chains, naive_chains))
}

fn naive_init(init: &McmcInit, len: usize) -> McmcInit {
    match init {
        McmcInit::Given(v) => McmcInit::Given(v[..len.min(v.len())].to_vec()),
        other => other.clone(),
    }
}

fn finish(method: &str, chains: ChainSet, naive_chains: ChainSet) -> McmcFit {
    McmcFit {
        method: method.into(),
        summary: chains.summarize(),
        naive_summary: naive_chains.summarize(),
        chains,
        naive_chains,
    }
}

fn stage_marginal_loglik(p: &TwoStageParams, data: &TwoStageData) -> Result<f64> {
    let pi = compute_pi(&p.beta, &data.x)?;
    let s1 = compute_pistar(&p.gamma1, &data.z1)?;
    let s2 = compute_pitilde(&p.gamma2, &data.z2)?;
    let mut ll = 0.0;
    for i in 0..data.n() {
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        for j in 0..2 {
            p1 += s1.probs[i][0][j] * pi[i][j];
            for k in 0..2 {
                p2 += s2[i][0][k][j] * s1.probs[i][k][j] * pi[i][j];
            }
        }
        ll += if data.ystar1[i] == 1 { p1.ln() } else { (1.0 - p1).ln() };
        ll += if data.ystar2[i] == 1 { p2.ln() } else { (1.0 - p2).ln() };
    }
    Ok(ll)
}

/// Log-likelihood used by the two-stage sampler.
pub fn twostage_mcmc_loglik(params: &TwoStageParams, data: &TwoStageData, kind: TwoStageLikelihood) -> Result<f64> {
    match kind {
        TwoStageLikelihood::StageMarginal => stage_marginal_loglik(params, data),
        TwoStageLikelihood::Joint => observed_loglik_2stage(params, data),
    }
}

/// Two-stage sampler. The naive model is a logistic regression of `Y*(1)`
/// on `X` plus logistic regressions of `Y*(2)` on `Z2` within each `Y*(1)`
/// stratum; its `naive_gamma2` priors reuse the `gamma2` entries for `j = 1`.
pub fn mcmc_fit_2stage(data: &TwoStageData, prior: &PriorSpec, opts: &McmcOptions) -> Result<McmcFit> {
    opts.validate()?;
    let (px, pz1, pz2) = (data.x.ncols(), data.z1.ncols(), data.z2.ncols());
    let g2 = px + 2 * pz1;
    let dim = g2 + 4 * pz2;
    prior.validate(dim)?;
    let mut blocks = vec![0..px, px..px + pz1, px + pz1..g2];
    blocks.extend((0..4).map(|s| g2 + s * pz2..g2 + (s + 1) * pz2));
    let kind = opts.two_stage_likelihood;
    let target = Target {
        names: twostage_names(px, pz1, pz2),
        blocks,
        prior,
        loglik: Box::new(move |t: &[f64]| {
            TwoStageParams::from_slice(t, px, pz1, pz2)
                .and_then(|p| twostage_mcmc_loglik(&p, data, kind))
                .unwrap_or(f64::NAN)
        }),
    };
    let start = || -> Result<Vec<f64>> {
        let mut v = naive_fit_2stage(data)?.estimates()[..px].to_vec();
        v.extend(accurate_gamma_start(pz1, 0));
        v.extend(accurate_gamma_start(pz1, 1));
        for j in 0..2 {
            for _k in 0..2 {
                v.extend(accurate_gamma_start(pz2, j));
            }
        }
        Ok(v)
    };
    let correct = |c: &mut [Vec<f64>]| chain_label_correct_2stage(c, px, &data.z1, pz2);
    let chains = sample_target(&target, opts, 0, &start, &correct)?;

    let mut naive_entries = prior.entries[..px].to_vec();
    naive_entries.extend_from_slice(&prior.entries[g2..g2 + 2 * pz2]);
    let naive_prior = PriorSpec { entries: naive_entries };
    let strata: [Vec<usize>; 2] = [1u8, 2].map(|k| (0..data.n()).filter(|&i| data.ystar1[i] == k).collect());
    let mut names = bracket_names("naive_beta", &(1..=px).map(|c| vec![c]).collect::<Vec<_>>());
    let ng: Vec<Vec<usize>> = (1..=2).flat_map(|k| (1..=pz2).map(move |c| vec![c, k])).collect();
    names.extend(bracket_names("naive_gamma2", &ng));
    let strata_ref = &strata;
    let naive_target = Target {
        names,
        blocks: vec![0..px, px..px + pz2, px + pz2..px + 2 * pz2],
        prior: &naive_prior,
        loglik: Box::new(move |t: &[f64]| {
            let mut ll = logistic_loglik(&data.x, None, &|i| data.ystar1[i] == 1, &t[..px]);
            for (k, rows) in strata_ref.iter().enumerate() {
                let coef = &t[px + k * pz2..px + (k + 1) * pz2];
                ll += logistic_loglik(&data.z2, Some(rows), &|i| data.ystar2[i] == 1, coef);
            }
            ll
        }),
    };
    let naive_start = || -> Result<Vec<f64>> {
        Ok(naive_fit_2stage(data)?
            .estimates()
            .into_iter()
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect())
    };
    let naive_opts = McmcOptions {
        init: naive_init(&opts.init, px + 2 * pz2),
        ..opts.clone()
    };
    let naive_chains = sample_target(&naive_target, &naive_opts, NAIVE_STREAM, &naive_start, &|_| Ok(false))?;
    Ok(finish("combo-mcmc-2stage", chains, naive_chains))
}
