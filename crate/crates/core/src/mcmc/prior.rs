use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Independent prior for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Prior {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, sd: f64 },
    /// Laplace with the given location and scale.
    DoubleExponential { location: f64, scale: f64 },
    #[serde(rename = "t")]
    StudentT { location: f64, scale: f64, df: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::DoubleExponential { location, scale } => location.is_finite() && scale > 0.0 && scale.is_finite(),
            Prior::StudentT { location, scale, df } => {
                location.is_finite() && scale > 0.0 && scale.is_finite() && df > 0.0 && df.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid prior hyperparameters: {self:?}")))
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
            Prior::DoubleExponential { location, scale } => -(2.0 * scale).ln() - (x - location).abs() / scale,
            Prior::StudentT { location, scale, df } => {
                let z = (x - location) / scale;
                ln_gamma((df + 1.0) / 2.0)
                    - ln_gamma(df / 2.0)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - scale.ln()
                    - (df + 1.0) / 2.0 * (z * z / df).ln_1p()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Prior::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            Prior::DoubleExponential { location, scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Prior::StudentT { location, scale, df } => {
                location + scale * StudentT::new(df).expect("validated").sample(rng)
            }
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        self.ln_density(x) > f64::NEG_INFINITY
    }
}

impl std::str::FromStr for Prior {
    type Err = Error;

    /// Parses `normal(0,10)`, `uniform(-5,5)`, `double-exponential(0,1)`
    /// or `t(0,2.5,3)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| Error::Config(format!("malformed prior '{s}'")))?;
        if !s.ends_with(')') {
            return Err(Error::Config(format!("malformed prior '{s}'")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("non-numeric prior argument in '{s}'")))?;
        let need = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(Error::Config(format!("prior '{name}' takes {k} arguments")))
            }
        };
        let prior = match name.as_str() {
            "uniform" => {
                need(2)?;
                Prior::Uniform { lower: args[0], upper: args[1] }
            }
            "normal" => {
                need(2)?;
                Prior::Normal { mean: args[0], sd: args[1] }
            }
            "double-exponential" | "dexp" | "laplace" => {
                need(2)?;
                Prior::DoubleExponential { location: args[0], scale: args[1] }
            }
            "t" | "student-t" => {
                need(3)?;
                Prior::StudentT { location: args[0], scale: args[1], df: args[2] }
            }
            other => return Err(Error::Config(format!("unknown prior family '{other}'"))),
        };
        prior.validate()?;
        Ok(prior)
    }
}

/// One prior per coefficient, in the flat parameter order of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub entries: Vec<Prior>,
}

impl PriorSpec {
    pub fn iid(prior: Prior, dim: usize) -> Self {
        Self { entries: vec![prior; dim] }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.entries.len() != dim {
            return Err(Error::dim("prior entries", dim, self.entries.len()));
        }
        self.entries.iter().try_for_each(Prior::validate)
    }

    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.entries.len() {
            return Err(Error::dim("parameter vector", self.entries.len(), theta.len()));
        }
        Ok(self.entries.iter().zip(theta).map(|(p, &x)| p.ln_density(x)).sum())
    }

    pub(crate) fn ln_density_unchecked(&self, theta: &[f64]) -> f64 {
        self.entries.iter().zip(theta).map(|(p, &x)| p.ln_density(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.entries.iter().map(|p| p.sample(rng)).collect()
    }
}
