use std::collections::BTreeMap;
use std::path::Path;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::mediation::MediationData;
use crate::single::SingleOutcomeData;
use crate::twostage::TwoStageData;

use super::config::{AnalysisConfig, Coding, ModelKind};

/// A numeric table read from CSV. Missing cells are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
            .ok_or_else(|| Error::Config(format!("unknown column '{name}'")))
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "." | "null")
}

/// Reads `columns` (or every column when `None`) from a headed CSV file.
/// Cells that are empty or spelled `NA` become `NaN`; anything else that
/// does not parse as a number is an error naming the row and column.
pub fn read_table(path: &Path, columns: Option<&[String]>) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let wanted: Vec<String> = match columns {
        Some(c) => c.to_vec(),
        None => header.clone(),
    };
    let mut idx = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let k = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("unknown column '{name}'")))?;
        idx.push(k);
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, &k) in idx.iter().enumerate() {
            let cell = rec.get(k).unwrap_or("");
            let v = if is_missing(cell) {
                f64::NAN
            } else {
                cell.trim().parse::<f64>().map_err(|_| Error::Data {
                    row: r + 1,
                    column: wanted[c].clone(),
                    message: format!("cannot parse '{cell}' as a number"),
                })?
            };
            cols[c].push(v);
        }
    }
    Ok(Table {
        names: wanted,
        columns: cols,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Single(SingleOutcomeData),
    TwoStage(TwoStageData),
    Mediation(MediationData),
}

impl Dataset {
    pub fn n(&self) -> usize {
        match self {
            Dataset::Single(d) => d.n(),
            Dataset::TwoStage(d) => d.n(),
            Dataset::Mediation(d) => d.n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// Auxiliary columns (ROC risk, labels, recommendations) on the kept rows.
    pub extra: BTreeMap<String, Vec<f64>>,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

/// `rows` holds the original (0-based) file row of each value for messages.
fn categorical(values: &[f64], rows: &[usize], column: &str, coding: Coding) -> Result<Vec<u8>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let other = match coding {
                Coding::OneTwo => 2.0,
                Coding::ZeroOne => 0.0,
            };
            let code = if v == 1.0 {
                Some(1)
            } else if v == other {
                Some(2)
            } else {
                None
            };
            code.ok_or_else(|| Error::Data {
                row: rows[i] + 1,
                column: column.to_string(),
                message: format!("value {v} is not a valid {coding:?} code"),
            })
        })
        .collect()
}

fn design(cols: &[Vec<f64>], n: usize) -> Result<DesignMatrix> {
    DesignMatrix::from_columns(n, cols)
}

/// Loads the columns bound in `config`, drops rows with a missing value in
/// any bound model column, maps proxy codes to `{1, 2}` and builds the model
/// data with intercepts prepended to each design block.
pub fn load_dataset(path: &Path, config: &AnalysisConfig) -> Result<LoadedData> {
    let kind = config
        .model_kind()?
        .ok_or_else(|| Error::Config(format!("command '{}' takes no dataset", config.command.as_str())))?;
    let mut bound: Vec<String> = Vec::new();
    let mut push = |s: &Option<String>| {
        if let Some(s) = s {
            bound.push(s.clone());
        }
    };
    match kind {
        ModelKind::Single => push(&config.ystar),
        ModelKind::TwoStage => {
            push(&config.ystar1);
            push(&config.ystar2);
        }
        ModelKind::Mediation => {
            push(&config.mstar);
            push(&config.outcome);
        }
    }
    push(&config.risk);
    let lists: Vec<&Vec<String>> = match kind {
        ModelKind::Single => vec![&config.x, &config.z],
        ModelKind::TwoStage => vec![&config.x, &config.z1, &config.z2],
        ModelKind::Mediation => vec![&config.x, &config.c, &config.z],
    };
    for l in &lists {
        bound.extend(l.iter().cloned());
    }
    let optional: Vec<String> = [&config.label, &config.recommendation].into_iter().flatten().cloned().collect();
    let mut all = bound.clone();
    all.extend(optional.iter().cloned());
    let table = read_table(path, Some(&all))?;
    let rows_read = table.nrows();

    let keep: Vec<usize> = (0..rows_read)
        .filter(|&i| bound.iter().all(|b| !table.column(b).expect("read")[i].is_nan()))
        .collect();
    let rows_dropped = rows_read - keep.len();
    if rows_dropped > 0 {
        log::info!("dropped {rows_dropped} of {rows_read} rows with missing values in bound columns");
    }
    if keep.is_empty() {
        return Err(Error::InvalidInput("no complete rows remain after dropping missing values".into()));
    }
    let n = keep.len();
    let col = |name: &str| -> Vec<f64> {
        let c = table.column(name).expect("read");
        keep.iter().map(|&i| c[i]).collect()
    };
    let block = |names: &[String]| -> Vec<Vec<f64>> { names.iter().map(|s| col(s)).collect() };
    let role = |r: &Option<String>| r.clone().expect("validated role");

    let dataset = match kind {
        ModelKind::Single => {
            let name = role(&config.ystar);
            Dataset::Single(SingleOutcomeData::new(
                categorical(&col(&name), &keep, &name, config.coding)?,
                design(&block(&config.x), n)?,
                design(&block(&config.z), n)?,
            )?)
        }
        ModelKind::TwoStage => {
            let (a, b) = (role(&config.ystar1), role(&config.ystar2));
            Dataset::TwoStage(TwoStageData::new(
                categorical(&col(&a), &keep, &a, config.coding)?,
                categorical(&col(&b), &keep, &b, config.coding)?,
                design(&block(&config.x), n)?,
                design(&block(&config.z1), n)?,
                design(&block(&config.z2), n)?,
            )?)
        }
        ModelKind::Mediation => {
            let m = role(&config.mstar);
            Dataset::Mediation(MediationData::new(
                categorical(&col(&m), &keep, &m, config.coding)?,
                col(&role(&config.outcome)),
                col(&config.x[0]),
                block(&config.c),
                design(&block(&config.z), n)?,
            )?)
        }
    };
    let mut extra = BTreeMap::new();
    if let Some(r) = &config.risk {
        extra.insert(r.clone(), col(r));
    }
    for o in &optional {
        extra.insert(o.clone(), col(o));
    }
    Ok(LoadedData {
        dataset,
        extra,
        rows_read,
        rows_dropped,
    })
}
