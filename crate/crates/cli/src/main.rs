use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use miscorr::io::{run, AnalysisConfig, RunStatus};

/// Misclassification-corrected outcome and mediation models.
#[derive(Debug, Parser)]
#[command(name = "miscorr", version)]
struct Cli {
    /// One of combo-em, combo-mcmc, combo-em-2stage, combo-mcmc-2stage,
    /// comma-em, comma-pvw, comma-ols, bootstrap, roc, simulate.
    command: String,

    /// TOML configuration file. Flags override its keys.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Output prefix: writes `<out>.csv`, `<out>.json` and command-specific extras.
    #[arg(long, short, default_value = "miscorr_out")]
    out: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads (the MISCORR_THREADS environment variable takes precedence).
    #[arg(long, default_value_t = 1)]
    n_parallel: usize,

    /// Print the JSON report to stdout as well.
    #[arg(long)]
    print: bool,

    #[command(flatten)]
    overrides: Overrides,

    /// Any other config key, as `key=value` with a TOML value (`x=["a","b"]`).
    /// Bare words are taken as strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    data: Option<String>,
    /// Parameter table from an earlier fit (for `roc`).
    #[arg(long)]
    fit: Option<String>,
    #[arg(long)]
    ystar: Option<String>,
    #[arg(long)]
    ystar1: Option<String>,
    #[arg(long)]
    ystar2: Option<String>,
    #[arg(long)]
    mstar: Option<String>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    z: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    z1: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    z2: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<String>>,
    #[arg(long)]
    risk: Option<String>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    recommendation: Option<String>,
    /// one-two or zero-one
    #[arg(long)]
    coding: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iter: Option<i64>,
    /// plain or squarem
    #[arg(long)]
    accel: Option<String>,
    /// normal, bernoulli or poisson
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    interaction: Option<bool>,
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    chains: Option<i64>,
    #[arg(long)]
    samples: Option<i64>,
    #[arg(long)]
    burn_in: Option<i64>,
    #[arg(long)]
    n_bootstrap: Option<i64>,
    /// Estimator to bootstrap.
    #[arg(long)]
    method: Option<String>,
}

impl Overrides {
    fn apply(self, t: &mut toml::Table) {
        use toml::Value as V;
        let mut put = |k: &str, v: Option<V>| {
            if let Some(v) = v {
                t.insert(k.into(), v);
            }
        };
        let s = |v: Option<String>| v.map(V::String);
        let list = |v: Option<Vec<String>>| v.map(|v| V::Array(v.into_iter().map(V::String).collect()));
        let int = |v: Option<i64>| v.map(V::Integer);
        put("data", s(self.data));
        put("fit", s(self.fit));
        put("ystar", s(self.ystar));
        put("ystar1", s(self.ystar1));
        put("ystar2", s(self.ystar2));
        put("mstar", s(self.mstar));
        put("outcome", s(self.outcome));
        put("x", list(self.x));
        put("z", list(self.z));
        put("z1", list(self.z1));
        put("z2", list(self.z2));
        put("c", list(self.c));
        put("risk", s(self.risk));
        put("label", s(self.label));
        put("recommendation", s(self.recommendation));
        put("coding", s(self.coding));
        put("tolerance", self.tolerance.map(V::Float));
        put("max_iter", int(self.max_iter));
        put("accel", s(self.accel));
        put("dist", s(self.dist));
        put("interaction", self.interaction.map(V::Boolean));
        put("prior", s(self.prior));
        put("chains", int(self.chains));
        put("samples", int(self.samples));
        put("burn_in", int(self.burn_in));
        put("n_bootstrap", int(self.n_bootstrap));
        put("bootstrap_method", s(self.method));
    }
}

fn parse_set(kv: &str) -> Result<(String, toml::Value), String> {
    let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
    let k = k.trim().to_string();
    let value = match format!("v = {v}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((k, value))
}

fn threads(flag: usize) -> Result<usize, String> {
    let n = match std::env::var("MISCORR_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("MISCORR_THREADS must be a positive integer, got '{v}'"))?,
        Err(_) => flag,
    };
    if n == 0 {
        return Err("thread count must be at least 1".into());
    }
    Ok(n)
}

fn build_config(cli: Cli) -> Result<(AnalysisConfig, PathBuf, bool), String> {
    let mut table = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            text.parse::<toml::Table>().map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => toml::Table::new(),
    };
    table.insert("command".into(), toml::Value::String(cli.command.clone()));
    table.insert(
        "seed".into(),
        toml::Value::Integer(i64::try_from(cli.seed).map_err(|_| "seed must fit in i64".to_string())?),
    );
    cli.overrides.apply(&mut table);
    for kv in &cli.set {
        let (k, v) = parse_set(kv)?;
        table.insert(k, v);
    }
    let text = toml::to_string(&table).map_err(|e| e.to_string())?;
    let mut config = AnalysisConfig::from_toml_str(&text).map_err(|e| e.to_string())?;
    config.n_parallel = threads(cli.n_parallel)?;
    Ok((config, cli.out, cli.print))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (config, out, print) = match build_config(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(config.n_parallel)
        .build_global()
    {
        log::warn!("could not size the thread pool: {e}");
    }
    let output = match run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = output.write(&out) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if print {
        print!("{}", output.report_json());
    }
    match output.status {
        RunStatus::Ok => ExitCode::SUCCESS,
        RunStatus::NotConverged => {
            eprintln!("warning: estimation did not converge; partial results written");
            ExitCode::from(2)
        }
    }
}
