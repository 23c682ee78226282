use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::{Accel, EmOptions};
use crate::error::{Error, Result};
use crate::mcmc::{McmcInit, McmcOptions, Prior, PriorSpec, TwoStageLikelihood};
use crate::mediation::OutcomeDist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ComboEm,
    ComboMcmc,
    #[serde(rename = "combo-em-2stage")]
    ComboEm2stage,
    #[serde(rename = "combo-mcmc-2stage")]
    ComboMcmc2stage,
    CommaEm,
    CommaPvw,
    CommaOls,
    Bootstrap,
    Roc,
    Simulate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::ComboEm => "combo-em",
            Command::ComboMcmc => "combo-mcmc",
            Command::ComboEm2stage => "combo-em-2stage",
            Command::ComboMcmc2stage => "combo-mcmc-2stage",
            Command::CommaEm => "comma-em",
            Command::CommaPvw => "comma-pvw",
            Command::CommaOls => "comma-ols",
            Command::Bootstrap => "bootstrap",
            Command::Roc => "roc",
            Command::Simulate => "simulate",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown command '{s}'")))
    }
}

/// How binary proxy columns are coded in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Coding {
    /// 1 = event, 2 = no event.
    #[default]
    OneTwo,
    /// 1 = event, 0 = no event.
    ZeroOne,
}

/// Which latent structure the dataset feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Single,
    TwoStage,
    Mediation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimModel {
    Single,
    Twostage,
    Mediation,
}

/// Generating model for the `simulate` command. Covariate specs use
/// `normal(mean,sd)` / `bernoulli(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: SimModel,
    pub n: usize,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<[Vec<f64>; 2]>,
    #[serde(default)]
    pub gamma1: Option<[Vec<f64>; 2]>,
    /// Indexed `[k][j]`: first-stage proxy level, then latent class.
    #[serde(default)]
    pub gamma2: Option<[[Vec<f64>; 2]; 2]>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub z1: Vec<String>,
    #[serde(default)]
    pub z2: Vec<String>,
    #[serde(default)]
    pub c: Vec<String>,
}

fn default_tolerance() -> f64 {
    1e-7
}
fn default_max_iter() -> usize {
    1500
}
fn default_accel() -> Accel {
    Accel::Squarem
}
fn default_true() -> bool {
    true
}
fn default_prior() -> String {
    "normal(0,10)".into()
}
fn default_chains() -> usize {
    2
}
fn default_samples() -> usize {
    1000
}
fn default_burn_in() -> usize {
    500
}
fn default_bootstrap() -> usize {
    1000
}

/// Resolved analysis configuration. Every field has a default except the
/// command; the whole struct is embedded in each JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub command: Command,
    #[serde(default)]
    pub data: Option<String>,
    /// Parameter table written by an earlier fit (used by `roc`).
    #[serde(default)]
    pub fit: Option<String>,

    #[serde(default)]
    pub ystar: Option<String>,
    #[serde(default)]
    pub ystar1: Option<String>,
    #[serde(default)]
    pub ystar2: Option<String>,
    #[serde(default)]
    pub mstar: Option<String>,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub z1: Vec<String>,
    #[serde(default)]
    pub z2: Vec<String>,
    #[serde(default)]
    pub c: Vec<String>,
    #[serde(default)]
    pub risk: Option<String>,
    /// Ground-truth labels for subset ROC, coded like the proxies; missing allowed.
    #[serde(default)]
    pub label: Option<String>,
    /// Binary recommendation (1/0) plotted as a single ROC point.
    #[serde(default)]
    pub recommendation: Option<String>,
    #[serde(default)]
    pub coding: Coding,

    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_accel")]
    pub accel: Accel,
    #[serde(default = "default_true")]
    pub compute_se: bool,
    #[serde(default)]
    pub dist: OutcomeDist,
    #[serde(default)]
    pub interaction: bool,

    #[serde(default = "default_prior")]
    pub prior: String,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub init: McmcInit,
    #[serde(default)]
    pub two_stage_likelihood: TwoStageLikelihood,

    #[serde(default = "default_bootstrap")]
    pub n_bootstrap: usize,
    #[serde(default)]
    pub bootstrap_method: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    /// ROC thresholds; the default is 0.00, 0.01, ..., 1.00.
    #[serde(default)]
    pub cutoffs: Option<Vec<f64>>,

    #[serde(default)]
    pub simulate: Option<SimulateConfig>,

    /// Worker threads. Runtime only: never serialized, never changes output.
    #[serde(skip)]
    pub n_parallel: usize,
}

impl AnalysisConfig {
    /// A configuration with every option at its default.
    pub fn new(command: Command) -> Self {
        let mut v = toml::Table::new();
        v.insert("command".into(), toml::Value::String(command.as_str().into()));
        let mut cfg: AnalysisConfig = v.try_into().expect("defaults deserialize");
        cfg.n_parallel = 1;
        cfg
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut cfg: AnalysisConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.n_parallel = 1;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            tolerance: self.tolerance,
            max_iter: self.max_iter,
            accel: self.accel,
            compute_se: self.compute_se,
        }
    }

    pub fn prior_for(&self, dim: usize) -> Result<PriorSpec> {
        let p: Prior = self.prior.parse()?;
        Ok(PriorSpec::iid(p, dim))
    }

    pub fn mcmc_options(&self) -> McmcOptions {
        McmcOptions {
            n_chains: self.chains,
            n_samples: self.samples,
            burn_in: self.burn_in,
            seed: self.seed,
            init: self.init.clone(),
            two_stage_likelihood: self.two_stage_likelihood,
        }
    }

    /// The command whose estimator is run (the bootstrapped one for `bootstrap`).
    pub fn fit_command(&self) -> Result<Command> {
        match self.command {
            Command::Bootstrap => {
                let m = self
                    .bootstrap_method
                    .ok_or_else(|| Error::Config("bootstrap needs `bootstrap_method`".into()))?;
                match m {
                    Command::ComboEm | Command::ComboEm2stage | Command::CommaEm | Command::CommaPvw | Command::CommaOls => {
                        Ok(m)
                    }
                    other => Err(Error::Config(format!("cannot bootstrap '{}'", other.as_str()))),
                }
            }
            c => Ok(c),
        }
    }

    pub fn model_kind(&self) -> Result<Option<ModelKind>> {
        Ok(match self.fit_command()? {
            Command::ComboEm | Command::ComboMcmc => Some(ModelKind::Single),
            Command::ComboEm2stage | Command::ComboMcmc2stage => Some(ModelKind::TwoStage),
            Command::CommaEm | Command::CommaPvw | Command::CommaOls => Some(ModelKind::Mediation),
            Command::Roc => Some(if self.ystar1.is_some() { ModelKind::TwoStage } else { ModelKind::Single }),
            Command::Simulate | Command::Bootstrap => None,
        })
    }

    /// Checks that the roles required by the command are bound and that no
    /// column plays two outcome roles.
    pub fn validate(&self) -> Result<()> {
        let need = |name: &str, v: &Option<String>| {
            v.as_ref()
                .map(|_| ())
                .ok_or_else(|| Error::Config(format!("command '{}' needs the `{name}` column role", self.command.as_str())))
        };
        if self.tolerance <= 0.0 || !self.tolerance.is_finite() || self.max_iter == 0 {
            return Err(Error::Config("tolerance must be positive and max_iter at least 1".into()));
        }
        if self.command == Command::Simulate {
            return match &self.simulate {
                Some(_) => Ok(()),
                None => Err(Error::Config("simulate needs a [simulate] table".into())),
            };
        }
        if self.data.is_none() {
            return Err(Error::Config("no input data file given".into()));
        }
        match self.model_kind()? {
            Some(ModelKind::Single) => need("ystar", &self.ystar)?,
            Some(ModelKind::TwoStage) => {
                need("ystar1", &self.ystar1)?;
                need("ystar2", &self.ystar2)?;
            }
            Some(ModelKind::Mediation) => {
                need("mstar", &self.mstar)?;
                need("outcome", &self.outcome)?;
                if self.x.len() != 1 {
                    return Err(Error::Config("mediation needs exactly one exposure column in `x`".into()));
                }
            }
            None => {}
        }
        if self.command == Command::Roc {
            need("risk", &self.risk)?;
            if self.fit.is_none() {
                return Err(Error::Config("roc needs a `fit` parameter table".into()));
            }
        }
        let outcome_roles = [&self.ystar, &self.ystar1, &self.ystar2, &self.mstar, &self.outcome];
        let bound: Vec<&String> = outcome_roles.iter().filter_map(|r| r.as_ref()).collect();
        for (i, a) in bound.iter().enumerate() {
            if bound[i + 1..].contains(a) {
                return Err(Error::Config(format!("column '{a}' is bound to two outcome roles")));
            }
        }
        if let Some(c) = &self.cutoffs {
            if c.len() < 2 || c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config("cutoffs must be at least two increasing values".into()));
            }
        }
        Ok(())
    }
}
