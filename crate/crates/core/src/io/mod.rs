//! Dataset ingestion, configuration and report serialization.

mod config;
mod dataset;
mod output;
mod run;

pub use config::{AnalysisConfig, Coding, Command, ModelKind, SimModel, SimulateConfig};
pub use dataset::{load_dataset, read_table, Dataset, LoadedData, Table};
pub use output::{bootstrap_csv, fmt_f64, param_table_csv, posterior_csv, read_param_table, roc_csv, sim_table_csv};
pub use run::{run, run_on, RunOutput, RunStatus};
