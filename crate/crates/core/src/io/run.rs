use std::path::Path;

use serde_json::{json, Value};

use crate::bootstrap::{bootstrap_mediation, bootstrap_single, bootstrap_twostage, BootstrapOptions, MediationMethod};
use crate::error::{Error, Result};
use crate::mcmc::{mcmc_fit_2stage, mcmc_fit_single, McmcFit};
use crate::mediation::{covariate_profile, effect_estimates, MediationData, MediationFit, MediationParams};
use crate::report::FitReport;
use crate::roc::{adjusted_roc, default_cutoffs, predictive_prob_2stage, recommendation_point, subset_roc};
use crate::sim::{simulate_mediation, simulate_single, simulate_twostage, CovariateSpec};
use crate::single::{comparison_fits, e_step_weights, em_fit, SingleOutcomeParams};
use crate::twostage::{em_fit_2stage, TwoStageParams};

use super::config::{AnalysisConfig, Coding, Command, SimModel, SimulateConfig};
use super::dataset::{load_dataset, Dataset, LoadedData};
use super::output::{bootstrap_csv, param_table_csv, posterior_csv, read_param_table, roc_csv, sim_table_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// Output was produced but an estimator did not converge.
    NotConverged,
}

/// Everything a command produces. `files` pairs a suffix appended to the
/// output prefix (`.csv`, `_naive.csv`, ...) with the file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub report: Value,
    pub status: RunStatus,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `<prefix><suffix>` for every file plus `<prefix>.json`.
    pub fn write(&self, prefix: &Path) -> Result<()> {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let base = prefix.as_os_str().to_string_lossy().into_owned();
        for (suffix, body) in &self.files {
            std::fs::write(format!("{base}{suffix}"), body)?;
        }
        std::fs::write(format!("{base}.json"), self.report_json())?;
        Ok(())
    }
}

fn base_report(config: &AnalysisConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), json!("miscorr"));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(config.command.as_str()));
    m.insert("seed".into(), json!(config.seed));
    m.insert("config".into(), serde_json::to_value(config).expect("config serializes"));
    m
}

fn data_info(m: &mut serde_json::Map<String, Value>, d: &LoadedData) {
    m.insert(
        "data".into(),
        json!({ "rows_read": d.rows_read, "rows_dropped": d.rows_dropped, "n": d.dataset.n() }),
    );
}

fn fit_summary(r: &FitReport) -> Value {
    json!({
        "method": r.method,
        "converged": r.converged,
        "iterations": r.iterations,
        "loglik": r.loglik,
        "label_correction_applied": r.label_correction_applied,
        "sensitivity": r.sensitivity,
        "specificity": r.specificity,
        "parameters": r.rows,
    })
}

fn status(ok: bool) -> RunStatus {
    if ok {
        RunStatus::Ok
    } else {
        RunStatus::NotConverged
    }
}

fn data_path(config: &AnalysisConfig) -> Result<&Path> {
    config
        .data
        .as_deref()
        .map(Path::new)
        .ok_or_else(|| Error::Config("no input data file given".into()))
}

/// Validates `config`, loads its data and runs the command.
pub fn run(config: &AnalysisConfig) -> Result<RunOutput> {
    config.validate()?;
    match config.command {
        Command::Simulate => run_simulate(config),
        _ => {
            let data = load_dataset(data_path(config)?, config)?;
            run_on(config, &data)
        }
    }
}

/// Runs a command on already-loaded data.
pub fn run_on(config: &AnalysisConfig, data: &LoadedData) -> Result<RunOutput> {
    let mut rep = base_report(config);
    data_info(&mut rep, data);
    let em = config.em_options();
    let mut files = Vec::new();
    let ok = match (config.command, &data.dataset) {
        (Command::ComboEm, Dataset::Single(d)) => {
            let fit = em_fit(d, None, &em)?;
            let cmp = comparison_fits(d, &em)?;
            let mut table = fit.report.clone();
            table.append_prefixed("PSpec_", &cmp.perfect_specificity);
            table.append_prefixed("PSens_", &cmp.perfect_sensitivity);
            table.append_prefixed("naive_", &cmp.naive);
            files.push((".csv".into(), param_table_csv(&table.rows)?));
            rep.insert("fit".into(), fit_summary(&fit.report));
            rep.insert(
                "comparison".into(),
                json!({
                    "perfect_specificity": fit_summary(&cmp.perfect_specificity),
                    "perfect_sensitivity": fit_summary(&cmp.perfect_sensitivity),
                    "naive": fit_summary(&cmp.naive),
                }),
            );
            fit.report.converged
        }
        (Command::ComboEm2stage, Dataset::TwoStage(d)) => {
            let fit = em_fit_2stage(d, None, &em)?;
            let mut table = fit.report.clone();
            table.rows.extend(fit.naive.rows.iter().cloned());
            files.push((".csv".into(), param_table_csv(&table.rows)?));
            let mut s = fit_summary(&fit.report);
            s["second_stage_sensitivity"] = json!(fit.second_stage_sensitivity);
            s["second_stage_specificity"] = json!(fit.second_stage_specificity);
            rep.insert("fit".into(), s);
            rep.insert("naive".into(), fit_summary(&fit.naive));
            fit.report.converged
        }
        (Command::ComboMcmc, Dataset::Single(d)) => {
            let prior = config.prior_for(d.x.ncols() + 2 * d.z.ncols())?;
            let fit = mcmc_fit_single(d, &prior, &config.mcmc_options())?;
            mcmc_outputs(&fit, &mut files, &mut rep)?;
            true
        }
        (Command::ComboMcmc2stage, Dataset::TwoStage(d)) => {
            let prior = config.prior_for(d.x.ncols() + 2 * d.z1.ncols() + 4 * d.z2.ncols())?;
            let fit = mcmc_fit_2stage(d, &prior, &config.mcmc_options())?;
            mcmc_outputs(&fit, &mut files, &mut rep)?;
            true
        }
        (Command::CommaEm | Command::CommaPvw | Command::CommaOls, Dataset::Mediation(d)) => {
            let fit = mediation_method(config.command)?.fit(d, None, config.dist, config.interaction, &em)?;
            files.push((".csv".into(), param_table_csv(&fit.report.rows)?));
            rep.insert("fit".into(), fit_summary(&fit.report));
            rep.insert("effects".into(), effects_json(&fit.params, d)?);
            fit.report.converged
        }
        (Command::Bootstrap, ds) => run_bootstrap(config, ds, &mut files, &mut rep)?,
        (Command::Roc, ds) => run_roc(config, ds, data, &mut files, &mut rep)?,
        (cmd, _) => {
            return Err(Error::Config(format!("dataset does not match command '{}'", cmd.as_str())));
        }
    };
    rep.insert("converged".into(), json!(ok));
    Ok(RunOutput {
        files,
        report: Value::Object(rep),
        status: status(ok),
    })
}

fn mediation_method(cmd: Command) -> Result<MediationMethod> {
    Ok(match cmd {
        Command::CommaEm => MediationMethod::CommaEm,
        Command::CommaPvw => MediationMethod::CommaPvw,
        Command::CommaOls => MediationMethod::CommaOls,
        other => return Err(Error::Config(format!("'{}' is not a mediation method", other.as_str()))),
    })
}

fn effects_json(params: &MediationParams, d: &MediationData) -> Result<Value> {
    let profile = covariate_profile(d);
    let e = effect_estimates(params, 0.0, 1.0, Some(1.0), &profile)?;
    Ok(json!({
        "x0": 0.0,
        "x1": 1.0,
        "cde_mediator_level": 1.0,
        "covariate_profile": profile,
        "scale": e.scale,
        "nde": e.nde,
        "nie": e.nie,
        "total": e.total,
        "cde": e.cde,
    }))
}

fn mcmc_outputs(fit: &McmcFit, files: &mut Vec<(String, String)>, rep: &mut serde_json::Map<String, Value>) -> Result<()> {
    files.push((".csv".into(), posterior_csv(&fit.summary)?));
    files.push(("_naive.csv".into(), posterior_csv(&fit.naive_summary)?));
    let max_rhat = fit.summary.iter().map(|r| r.rhat).fold(f64::NAN, f64::max);
    if max_rhat > 1.1 {
        log::warn!("split R-hat up to {max_rhat:.3}; chains may not have mixed");
    }
    rep.insert(
        "mcmc".into(),
        json!({
            "method": fit.method,
            "chains": fit.chains.chains.len(),
            "samples": fit.chains.n_samples,
            "burn_in": fit.chains.burn_in,
            "acceptance": fit.chains.acceptance,
            "label_correction_applied": fit.chains.label_correction_applied,
            "summary": fit.summary,
            "naive_summary": fit.naive_summary,
        }),
    );
    Ok(())
}

fn run_bootstrap(
    config: &AnalysisConfig,
    ds: &Dataset,
    files: &mut Vec<(String, String)>,
    rep: &mut serde_json::Map<String, Value>,
) -> Result<bool> {
    let em = config.em_options();
    let opts = BootstrapOptions {
        replicates: config.n_bootstrap,
        workers: config.n_parallel.max(1),
        seed: config.seed,
    };
    let method = config.fit_command()?;
    let (point, summary) = match (method, ds) {
        (Command::ComboEm, Dataset::Single(d)) => {
            let fit = em_fit(d, None, &em)?;
            let s = bootstrap_single(d, &fit.params, &em, &opts)?;
            (fit.report, s)
        }
        (Command::ComboEm2stage, Dataset::TwoStage(d)) => {
            let fit = em_fit_2stage(d, None, &em)?;
            let s = bootstrap_twostage(d, &fit.params, &em, &opts)?;
            (fit.report, s)
        }
        (m, Dataset::Mediation(d)) => {
            let mm = mediation_method(m)?;
            let fit: MediationFit = mm.fit(d, None, config.dist, config.interaction, &em)?;
            let s = bootstrap_mediation(mm, d, &fit, &em, &opts)?;
            (fit.report, s)
        }
        (m, _) => return Err(Error::Config(format!("dataset does not match '{}'", m.as_str()))),
    };
    files.push((".csv".into(), bootstrap_csv(&summary)?));
    rep.insert("fit".into(), fit_summary(&point));
    rep.insert(
        "bootstrap".into(),
        json!({
            "method": method.as_str(),
            "replicates": summary.replicates,
            "n_converged": summary.n_converged,
            "se": summary.se,
            "ci_lower": summary.ci_lower,
            "ci_upper": summary.ci_upper,
        }),
    );
    Ok(point.converged)
}

fn lookup(table: &[(String, f64)], names: &[String]) -> Result<Vec<f64>> {
    names
        .iter()
        .map(|n| {
            table
                .iter()
                .find(|(k, _)| k == n)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config(format!("fit table has no row '{n}'")))
        })
        .collect()
}

fn run_roc(
    config: &AnalysisConfig,
    ds: &Dataset,
    data: &LoadedData,
    files: &mut Vec<(String, String)>,
    rep: &mut serde_json::Map<String, Value>,
) -> Result<bool> {
    let table = read_param_table(Path::new(config.fit.as_deref().expect("validated")))?;
    let weights = match ds {
        Dataset::Single(d) => {
            let names = SingleOutcomeParams::zeros(d.x.ncols(), d.z.ncols()).names();
            let p = SingleOutcomeParams::from_slice(&lookup(&table, &names)?, d.x.ncols(), d.z.ncols())?;
            e_step_weights(&p, d)?
        }
        Dataset::TwoStage(d) => {
            let (px, pz1, pz2) = (d.x.ncols(), d.z1.ncols(), d.z2.ncols());
            let names = TwoStageParams::zeros(px, pz1, pz2).names();
            let p = TwoStageParams::from_slice(&lookup(&table, &names)?, px, pz1, pz2)?;
            predictive_prob_2stage(&p, d)?
        }
        Dataset::Mediation(_) => return Err(Error::Config("roc works with outcome models only".into())),
    };
    let risk_name = config.risk.as_ref().expect("validated");
    let risk = &data.extra[risk_name];
    let cutoffs = config.cutoffs.clone().unwrap_or_else(default_cutoffs);
    let curve = adjusted_roc(risk, &weights, &cutoffs)?;
    files.push((".csv".into(), roc_csv(&curve)?));
    let mut roc = json!({ "auc": curve.auc, "cutoffs": cutoffs.len() });
    if let Some(label_name) = &config.label {
        let labels = &data.extra[label_name];
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_nan()).collect();
        let other = match config.coding {
            Coding::OneTwo => 2.0,
            Coding::ZeroOne => 0.0,
        };
        let lab = rows
            .iter()
            .map(|&i| match labels[i] {
                1.0 => Ok(1u8),
                v if v == other => Ok(0u8),
                v => Err(Error::Data {
                    row: i + 1,
                    column: label_name.clone(),
                    message: format!("label {v} is not a valid {:?} code", config.coding),
                }),
            })
            .collect::<Result<Vec<u8>>>()?;
        let sub_risk: Vec<f64> = rows.iter().map(|&i| risk[i]).collect();
        let sub = subset_roc(&sub_risk, &lab, &cutoffs)?;
        files.push(("_subset.csv".into(), roc_csv(&sub)?));
        roc["subset_auc"] = json!(sub.auc);
        roc["subset_n"] = json!(rows.len());
        if let Some(rec_name) = &config.recommendation {
            let rec_all = &data.extra[rec_name];
            let rec: Vec<u8> = rows
                .iter()
                .map(|&i| if rec_all[i] == 1.0 { 1 } else { 0 })
                .collect();
            let p = recommendation_point(&rec, &lab)?;
            roc["recommendation"] = json!({ "tpr": p.tpr, "fpr": p.fpr, "auc": p.auc });
        }
    }
    rep.insert("roc".into(), roc);
    Ok(true)
}

fn specs(v: &[String]) -> Result<Vec<CovariateSpec>> {
    v.iter().map(|s| s.parse()).collect()
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("simulate needs `{name}`")))
}

fn run_simulate(config: &AnalysisConfig) -> Result<RunOutput> {
    let sc: &SimulateConfig = config.simulate.as_ref().expect("validated");
    let table = match sc.model {
        SimModel::Single => {
            let p = SingleOutcomeParams {
                beta: sc.beta.clone(),
                gamma: need(&sc.gamma, "gamma")?,
            };
            simulate_single(sc.n, &p, &specs(&sc.x)?, &specs(&sc.z)?, config.seed)?.table()
        }
        SimModel::Twostage => {
            let p = TwoStageParams {
                beta: sc.beta.clone(),
                gamma1: need(&sc.gamma1, "gamma1")?,
                gamma2: need(&sc.gamma2, "gamma2")?,
            };
            simulate_twostage(sc.n, &p, &specs(&sc.x)?, &specs(&sc.z1)?, &specs(&sc.z2)?, config.seed)?.table()
        }
        SimModel::Mediation => {
            let x = specs(&sc.x)?;
            if x.len() != 1 {
                return Err(Error::Config("mediation simulation needs exactly one exposure spec in `x`".into()));
            }
            let p = MediationParams {
                beta: sc.beta.clone(),
                gamma: need(&sc.gamma, "gamma")?,
                theta: need(&sc.theta, "theta")?,
                sigma: sc.sigma,
                dist: config.dist,
                interaction: config.interaction,
            };
            simulate_mediation(sc.n, &p, x[0], &specs(&sc.c)?, &specs(&sc.z)?, config.seed)?.table()
        }
    };
    let mut rep = base_report(config);
    rep.insert("generating_parameters".into(), serde_json::to_value(sc).expect("serializes"));
    rep.insert("columns".into(), json!(table.names));
    rep.insert("n".into(), json!(table.nrows()));
    Ok(RunOutput {
        files: vec![(".csv".into(), sim_table_csv(&table)?)],
        report: Value::Object(rep),
        status: RunStatus::Ok,
    })
}
