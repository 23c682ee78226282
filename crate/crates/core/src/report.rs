use serde::{Deserialize, Serialize};

/// One row of a parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    /// `None` for rows whose method has no convergence notion.
    pub converged: Option<bool>,
}

/// Result of one estimation method, in the shape written to the CSV table
/// and the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub rows: Vec<ParamRow>,
    pub converged: bool,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub label_correction_applied: bool,
    /// Average sensitivity of the (first-stage) proxy.
    pub sensitivity: Option<f64>,
    /// Average specificity of the (first-stage) proxy.
    pub specificity: Option<f64>,
}

impl FitReport {
    pub fn new(method: impl Into<String>) -> Self {
        FitReport {
            method: method.into(),
            rows: Vec::new(),
            converged: true,
            loglik: None,
            iterations: 0,
            label_correction_applied: false,
            sensitivity: None,
            specificity: None,
        }
    }

    pub fn push_rows(&mut self, names: &[String], estimates: &[f64], ses: &[f64], converged: Option<bool>) {
        debug_assert_eq!(names.len(), estimates.len());
        for (i, name) in names.iter().enumerate() {
            self.rows.push(ParamRow {
                name: name.clone(),
                estimate: estimates[i],
                se: ses.get(i).copied().unwrap_or(f64::NAN),
                converged,
            });
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }

    pub fn ses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.se).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ParamRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.get(name).map(|r| r.estimate)
    }

    pub fn youden_j(&self) -> Option<f64> {
        Some(self.sensitivity? + self.specificity? - 1.0)
    }

    /// Appends another report's rows under a name prefix, e.g. `SAMBA_`.
    pub fn append_prefixed(&mut self, prefix: &str, other: &FitReport) {
        for row in &other.rows {
            self.rows.push(ParamRow {
                name: format!("{prefix}{}", row.name),
                ..row.clone()
            });
        }
    }
}
