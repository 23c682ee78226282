use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::EmOptions;
use crate::error::{Error, Result};
use crate::math::{quantile, sample_sd};
use crate::mediation::{em_fit_mediation, ols_correct, pvw_fit, MediationData, MediationFit, MediationParams, OutcomeDist};
use crate::single::{em_fit, SingleOutcomeData, SingleOutcomeParams};
use crate::twostage::{em_fit_2stage, TwoStageData, TwoStageParams};

pub const RECOMMENDED_MIN_REPLICATES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Threads in the worker pool; output does not depend on it.
    pub workers: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 1000,
            workers: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub replicates: usize,
    pub n_converged: usize,
}

/// Row indices for replicate `b`; each replicate owns stream `b` of the
/// master seed, so draws do not depend on scheduling.
pub fn resample_indices(n: usize, seed: u64, b: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Generic nonparametric bootstrap. `refit` receives resampled row indices
/// and returns the replicate estimate, or `None` when the fit did not
/// converge. Failed and non-converged replicates are dropped.
pub fn bootstrap<F>(n: usize, names: Vec<String>, estimates: Vec<f64>, refit: F, opts: &BootstrapOptions) -> Result<BootstrapSummary>
where
    F: Fn(&[usize]) -> Result<Option<Vec<f64>>> + Sync,
{
    if opts.replicates < 2 {
        return Err(Error::invalid("at least two bootstrap replicates are required"));
    }
    if n == 0 {
        return Err(Error::invalid("cannot bootstrap an empty dataset"));
    }
    if opts.replicates < RECOMMENDED_MIN_REPLICATES {
        log::warn!(
            "{} bootstrap replicates requested; at least {RECOMMENDED_MIN_REPLICATES} are recommended",
            opts.replicates
        );
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Bootstrap(e.to_string()))?;
    let p = estimates.len();
    let draws: Vec<Option<Vec<f64>>> = pool.install(|| {
        (0..opts.replicates as u64)
            .into_par_iter()
            .map(|b| {
                let rows = resample_indices(n, opts.seed, b);
                match refit(&rows) {
                    Ok(Some(v)) if v.len() == p && v.iter().all(|x| x.is_finite()) => Some(v),
                    Ok(_) => None,
                    Err(e) => {
                        log::debug!("bootstrap replicate {b} failed: {e}");
                        None
                    }
                }
            })
            .collect()
    });
    let kept: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Bootstrap("no bootstrap replicate converged".into()));
    }
    let dropped = opts.replicates - kept.len();
    if dropped > 0 {
        log::info!("{dropped} of {} bootstrap replicates dropped", opts.replicates);
    }
    let mut se = Vec::with_capacity(p);
    let mut lo = Vec::with_capacity(p);
    let mut hi = Vec::with_capacity(p);
    for k in 0..p {
        let col: Vec<f64> = kept.iter().map(|v| v[k]).collect();
        se.push(if col.len() > 1 { sample_sd(&col) } else { f64::NAN });
        lo.push(quantile(&col, 0.025));
        hi.push(quantile(&col, 0.975));
    }
    Ok(BootstrapSummary {
        names,
        estimates,
        se,
        ci_lower: lo,
        ci_upper: hi,
        replicates: opts.replicates,
        n_converged: kept.len(),
    })
}

fn quiet(em: &EmOptions) -> EmOptions {
    EmOptions { compute_se: false, ..*em }
}

pub fn bootstrap_single(
    data: &SingleOutcomeData,
    point: &SingleOutcomeParams,
    em: &EmOptions,
    opts: &BootstrapOptions,
) -> Result<BootstrapSummary> {
    let em = quiet(em);
    bootstrap(
        data.n(),
        point.names(),
        point.to_vec(),
        |rows| {
            let fit = em_fit(&data.select_rows(rows), Some(point), &em)?;
            Ok(fit.report.converged.then(|| fit.params.to_vec()))
        },
        opts,
    )
}

pub fn bootstrap_twostage(
    data: &TwoStageData,
    point: &TwoStageParams,
    em: &EmOptions,
    opts: &BootstrapOptions,
) -> Result<BootstrapSummary> {
    let em = quiet(em);
    bootstrap(
        data.n(),
        point.names(),
        point.to_vec(),
        |rows| {
            let fit = em_fit_2stage(&data.select_rows(rows), Some(point), &em)?;
            Ok(fit.report.converged.then(|| fit.params.to_vec()))
        },
        opts,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediationMethod {
    CommaEm,
    CommaPvw,
    CommaOls,
}

impl MediationMethod {
    pub fn fit(
        self,
        data: &MediationData,
        start: Option<&MediationParams>,
        dist: OutcomeDist,
        interaction: bool,
        em: &EmOptions,
    ) -> Result<MediationFit> {
        match self {
            Self::CommaEm => em_fit_mediation(data, start, dist, interaction, em),
            Self::CommaPvw => pvw_fit(data, start, dist, interaction, em),
            Self::CommaOls => {
                if dist != OutcomeDist::Normal {
                    return Err(Error::Unsupported("the OLS correction needs a continuous outcome".into()));
                }
                ols_correct(data, start, interaction, em)
            }
        }
    }
}

/// Bootstrap for the mediation estimators. Every row of the point report
/// (including `sigma` where present) is resampled.
pub fn bootstrap_mediation(
    method: MediationMethod,
    data: &MediationData,
    point: &MediationFit,
    em: &EmOptions,
    opts: &BootstrapOptions,
) -> Result<BootstrapSummary> {
    let em = quiet(em);
    let (dist, inter) = (point.params.dist, point.params.interaction);
    let names: Vec<String> = point.report.names().iter().map(|s| s.to_string()).collect();
    bootstrap(
        data.n(),
        names,
        point.report.estimates(),
        |rows| {
            let fit = method.fit(&data.select_rows(rows), Some(&point.params), dist, inter, &em)?;
            Ok(fit.report.converged.then(|| fit.report.estimates()))
        },
        opts,
    )
}
