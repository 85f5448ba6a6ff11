use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Result};
use crate::numerics::Matrix;

/// A panel of aligned time series: `n` observations of named columns, one of
/// which is usually the forecasting target.
///
/// Rows are time, columns are series. The optional time labels are carried
/// through for reporting only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMatrix {
    names: Vec<String>,
    time_index: Vec<String>,
    data: Matrix,
}

impl SeriesMatrix {
    pub fn new(names: Vec<String>, data: Matrix) -> Result<Self> {
        let time_index = (0..data.rows()).map(|i| i.to_string()).collect();
        Self::with_time_index(names, time_index, data)
    }

    pub fn with_time_index(names: Vec<String>, time_index: Vec<String>, data: Matrix) -> Result<Self> {
        ensure_input!(
            names.len() == data.cols(),
            "{} column names for {} columns",
            names.len(),
            data.cols()
        );
        ensure_input!(
            time_index.len() == data.rows(),
            "{} time labels for {} rows",
            time_index.len(),
            data.rows()
        );
        ensure_input!(data.is_finite(), "panel contains non-finite values");
        Ok(SeriesMatrix { names, time_index, data })
    }

    /// Target in column 0 named `y`, predictors named `x1..xp`.
    pub fn from_target_and_predictors(y: Vec<f64>, x: &Matrix) -> Result<Self> {
        ensure_input!(y.len() == x.rows(), "target and predictors differ in length");
        let mut cols: Vec<&[f64]> = vec![&y];
        cols.extend(x.columns());
        let data = Matrix::from_columns(y.len(), &cols);
        let mut names = vec!["y".to_string()];
        names.extend((1..=x.cols()).map(|j| format!("x{j}")));
        Self::new(names, data)
    }

    #[inline]
    pub fn n_obs(&self) -> usize {
        self.data.rows()
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.data.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn time_index(&self) -> &[String] {
        &self.time_index
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        self.data.col(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn check_target(&self, target: usize) -> Result<()> {
        ensure_input!(target < self.n_cols(), "target column {target} out of range ({} columns)", self.n_cols());
        Ok(())
    }

    /// Column ids of every series other than `target`, in column order.
    pub fn predictor_ids(&self, target: usize) -> Vec<usize> {
        (0..self.n_cols()).filter(|&j| j != target).collect()
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> SeriesMatrix {
        SeriesMatrix {
            names: self.names.clone(),
            time_index: self.time_index[start..end].to_vec(),
            data: self.data.row_range(start, end),
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> SeriesMatrix {
        SeriesMatrix {
            names: idx.iter().map(|&j| self.names[j].clone()).collect(),
            time_index: self.time_index.clone(),
            data: self.data.select_columns(idx),
        }
    }
}
