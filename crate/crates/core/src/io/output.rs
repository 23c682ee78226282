use std::path::Path;

use crate::bootstrap::BootstrapSummary;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorSummary;
use crate::report::ParamRow;
use crate::roc::RocCurve;
use crate::sim::SimTable;

/// Shortest text that parses back to the same `f64`. Missing values are
/// written as `NA`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "TRUE",
        Some(false) => "FALSE",
        None => "NA",
    }
}

fn write_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `Parameter,Estimates,SE,Convergence`.
pub fn param_table_csv(rows: &[ParamRow]) -> Result<String> {
    write_rows(
        &["Parameter", "Estimates", "SE", "Convergence"],
        rows.iter().map(|r| {
            vec![
                r.name.clone(),
                fmt_f64(r.estimate),
                fmt_f64(r.se),
                fmt_bool(r.converged).to_string(),
            ]
        }),
    )
}

/// `parameter_name,posterior_mean,posterior_median`.
pub fn posterior_csv(rows: &[PosteriorSummary]) -> Result<String> {
    write_rows(
        &["parameter_name", "posterior_mean", "posterior_median"],
        rows.iter().map(|r| vec![r.name.clone(), fmt_f64(r.mean), fmt_f64(r.median)]),
    )
}

pub fn bootstrap_csv(s: &BootstrapSummary) -> Result<String> {
    write_rows(
        &["Parameter", "Estimates", "SE", "CI_lower", "CI_upper"],
        (0..s.names.len()).map(|k| {
            vec![
                s.names[k].clone(),
                fmt_f64(s.estimates[k]),
                fmt_f64(s.se[k]),
                fmt_f64(s.ci_lower[k]),
                fmt_f64(s.ci_upper[k]),
            ]
        }),
    )
}

/// `cutoff,FPR,TPR`.
pub fn roc_csv(c: &RocCurve) -> Result<String> {
    write_rows(
        &["cutoff", "FPR", "TPR"],
        (0..c.cutoffs.len()).map(|k| vec![fmt_f64(c.cutoffs[k]), fmt_f64(c.fpr[k]), fmt_f64(c.tpr[k])]),
    )
}

pub fn sim_table_csv(t: &SimTable) -> Result<String> {
    let header: Vec<&str> = t.names.iter().map(String::as_str).collect();
    write_rows(
        &header,
        (0..t.nrows()).map(|i| t.columns.iter().map(|c| fmt_f64(c[i])).collect()),
    )
}

/// Reads the `Parameter` and `Estimates` columns of a parameter table.
pub fn read_param_table(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let pos = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("parameter table {} lacks a '{name}' column", path.display())))
    };
    let (pn, pe) = (pos("Parameter")?, pos("Estimates")?);
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(pe).unwrap_or("");
        let v = if cell == "NA" {
            f64::NAN
        } else {
            cell.parse::<f64>().map_err(|_| Error::Data {
                row: r + 1,
                column: "Estimates".into(),
                message: format!("cannot parse '{cell}'"),
            })?
        };
        out.push((rec.get(pn).unwrap_or("").to_string(), v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(f64::NAN), "NA");
        assert_eq!(fmt_f64(-2.5e20), "-2.5e20");
    }

    #[test]
    fn param_table_shape() {
        let rows = vec![ParamRow {
            name: "beta1".into(),
            estimate: 0.5,
            se: f64::NAN,
            converged: Some(true),
        }];
        assert_eq!(param_table_csv(&rows).unwrap(), "Parameter,Estimates,SE,Convergence\nbeta1,0.5,NA,TRUE\n");
    }

    proptest! {
        #[test]
        fn float_text_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
