//! Dense matrices with an observation mask.
//!
//! Every fit metric and every inference update in this crate reads only the
//! observed cells. Unobserved cells are normalised to `0.0` on construction so
//! nothing downstream can accidentally depend on them.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// An `I x J` matrix together with the set of observed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
    n_observed: usize,
}

impl MaskedMatrix {
    /// Builds a masked matrix, caching the row and column index sets.
    pub fn from_dense(values: Array2<f64>, mask: Array2<bool>) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::ShapeMismatch {
                expected: values.dim(),
                found: mask.dim(),
            });
        }
        let (n_rows, n_cols) = values.dim();
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut values = values;
        Zip::from(&mut values).and(&mask).for_each(|v, &m| {
            if !m {
                *v = 0.0;
            }
        });

        let mut rows = vec![Vec::new(); n_rows];
        let mut cols = vec![Vec::new(); n_cols];
        for ((i, j), &m) in mask.indexed_iter() {
            if m {
                rows[i].push(j);
                cols[j].push(i);
            }
        }
        let n_observed = rows.iter().map(Vec::len).sum();
        if n_observed == 0 {
            return Err(Error::NoObservations);
        }
        Ok(Self {
            values,
            mask,
            rows,
            cols,
            n_observed,
        })
    }

    /// A matrix with every cell observed.
    pub fn fully_observed(values: Array2<f64>) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), true);
        Self::from_dense(values, mask)
    }

    /// Keeps only the observed cells that are also set in `mask`.
    pub fn restrict(&self, mask: &Array2<bool>) -> Result<Self> {
        if mask.dim() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                found: mask.dim(),
            });
        }
        let combined = Zip::from(&self.mask).and(mask).map_collect(|&a, &b| a && b);
        Self::from_dense(self.values.clone(), combined)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// `|Ω|`.
    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    pub fn observed_fraction(&self) -> f64 {
        self.n_observed as f64 / (self.nrows() * self.ncols()) as f64
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[[i, j]]
    }

    /// The observed value at `(i, j)`, if any.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[[i, j]].then(|| self.values[[i, j]])
    }

    /// Values with unobserved cells set to zero.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn mask(&self) -> ArrayView2<'_, bool> {
        self.mask.view()
    }

    /// Observed column indices of row `i` (`Ω_i`).
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    /// Observed row indices of column `j` (`Ω_j`).
    pub fn col_indices(&self, j: usize) -> &[usize] {
        &self.cols[j]
    }

    /// Observed cells in row-major order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(move |(i, js)| js.iter().map(move |&j| (i, j, self.values[[i, j]])))
    }

    /// Mean of the observed values in each column; `0` for empty columns.
    pub fn column_means(&self) -> Vec<f64> {
        self.cols
            .iter()
            .enumerate()
            .map(|(j, is)| {
                if is.is_empty() {
                    0.0
                } else {
                    is.iter().map(|&i| self.values[[i, j]]).sum::<f64>() / is.len() as f64
                }
            })
            .collect()
    }

    /// Same data with rows and columns swapped.
    pub fn transposed(&self) -> Self {
        Self {
            values: self.values.t().to_owned(),
            mask: self.mask.t().to_owned(),
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            n_observed: self.n_observed,
        }
    }

    pub(crate) fn view(&self) -> MaskedView<'_> {
        MaskedView {
            values: self.values.view(),
            rows: &self.rows,
        }
    }

    /// View with rows and columns swapped; rows of the view are columns of the data.
    pub(crate) fn view_t(&self) -> MaskedView<'_> {
        MaskedView {
            values: self.values.t(),
            rows: &self.cols,
        }
    }

    fn check_shape(&self, prediction: &ArrayView2<'_, f64>) -> Result<()> {
        if prediction.dim() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                found: prediction.dim(),
            });
        }
        Ok(())
    }

    /// Mean squared error over the observed cells.
    pub fn mse(&self, prediction: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_shape(&prediction)?;
        Ok(self.sum_sq_error(prediction) / self.n_observed as f64)
    }

    pub(crate) fn sum_sq_error(&self, prediction: ArrayView2<'_, f64>) -> f64 {
        self.observed()
            .map(|(i, j, r)| {
                let d = r - prediction[[i, j]];
                d * d
            })
            .sum()
    }

    /// Generalised KL (I-) divergence `Σ_Ω R log(R/P) - R + P`, using `0 log 0 = 0`.
    pub fn i_divergence(&self, prediction: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_shape(&prediction)?;
        let mut total = 0.0;
        for (i, j, r) in self.observed() {
            let p = prediction[[i, j]];
            if !(p > 0.0) {
                return Err(Error::NonPositivePrediction {
                    row: i,
                    col: j,
                    value: p,
                });
            }
            if r < 0.0 {
                return Err(Error::NegativeData {
                    row: i,
                    col: j,
                    value: r,
                });
            }
            let log_term = if r == 0.0 { 0.0 } else { r * (r / p).ln() };
            total += log_term - r + p;
        }
        Ok(total)
    }
}

/// Row-oriented borrowed view of a masked matrix, possibly transposed.
#[derive(Clone, Copy)]
pub(crate) struct MaskedView<'a> {
    pub values: ArrayView2<'a, f64>,
    pub rows: &'a [Vec<usize>],
}

impl MaskedView<'_> {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }
}
