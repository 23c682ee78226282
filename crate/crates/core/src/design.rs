use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Predictor block with a leading intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
}

/// Validates a category vector coded {1, 2} (1 is the event).
pub fn parse_categories(values: &[f64]) -> Result<Vec<u8>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 1.0 {
                Ok(1)
            } else if v == 2.0 {
                Ok(2)
            } else {
                Err(Error::invalid(format!(
                    "category at position {i} is {v}; expected 1 or 2"
                )))
            }
        })
        .collect()
}

impl DesignMatrix {
    /// Builds `[1 | columns]`. Every column must have `n` finite entries.
    pub fn from_columns(n: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len() + 1;
        for col in columns {
            if col.len() != n {
                return Err(Error::dim("design column", n, col.len()));
            }
        }
        let matrix = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
        Self::from_matrix(matrix)
    }

    /// Builds `[1 | rows]` from row-major covariate rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let q = rows.first().map_or(0, Vec::len);
        for row in rows {
            if row.len() != q {
                return Err(Error::dim("design row", q, row.len()));
            }
        }
        let matrix = DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        Self::from_matrix(matrix)
    }

    pub fn intercept_only(n: usize) -> Self {
        DesignMatrix {
            matrix: DMatrix::from_element(n, 1, 1.0),
        }
    }

    /// Wraps a full matrix whose first column must already be all ones.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 {
            return Err(Error::invalid("design matrix needs an intercept column"));
        }
        if matrix.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("first design column must be all ones"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains non-finite entries"));
        }
        Ok(DesignMatrix { matrix })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    /// `X b` for a coefficient slice of length `ncols`.
    pub fn linear_predictor(&self, coef: &[f64]) -> Result<Vec<f64>> {
        if coef.len() != self.ncols() {
            return Err(Error::dim("coefficient vector", self.ncols(), coef.len()));
        }
        let b = DVector::from_column_slice(coef);
        Ok((&self.matrix * b).as_slice().to_vec())
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            matrix: self.matrix.select_rows(rows),
        }
    }

    /// Covariate values without the intercept, as row vectors.
    pub fn covariate_row(&self, row: usize) -> Vec<f64> {
        (1..self.ncols()).map(|j| self.matrix[(row, j)]).collect()
    }

    /// Column means of the non-intercept columns.
    pub fn covariate_means(&self) -> Vec<f64> {
        let n = self.nrows() as f64;
        (1..self.ncols())
            .map(|j| self.matrix.column(j).sum() / n)
            .collect()
    }
}
