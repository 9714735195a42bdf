//! Past/future partial-session matrices with exponential position decay, and
//! row normalization into probability rows.

use serde::{Deserialize, Serialize};

use crate::data::SessionDataset;
use crate::dense::DenseMatrix;
use crate::error::{DataError, LinalgError};
use crate::scalar::Scalar;
use crate::sparse::SessionMatrix;

/// Position-decay temperatures for training (`delta_pos`) and inference (`delta_inf`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    pub delta_pos: f64,
    pub delta_inf: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            delta_pos: 1.0,
            delta_inf: 1.0,
        }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("delta_pos", self.delta_pos), ("delta_inf", self.delta_inf)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// `exp(-distance / delta)`.
pub fn decay_weight<T: Scalar>(distance: usize, delta: f64) -> T {
    T::of((-(distance as f64) / delta).exp())
}

/// Row `r` of `past` and row `r` of `future` come from the same split point.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialMatrices<T> {
    pub past: SessionMatrix<T>,
    pub future: SessionMatrix<T>,
}

impl<T: Scalar> PartialMatrices<T> {
    pub fn pair_count(&self) -> usize {
        self.past.rows()
    }
}

/// For every session `s` and split point `i` in `1..|s|`, emits the past row
/// `s[..i]` weighted by distance to its last item and the future row `s[i..]`
/// weighted by distance to its first item. Repeated items keep the largest
/// weight.
pub fn build_partial_matrices<T: Scalar>(
    dataset: &SessionDataset,
    delta_pos: f64,
) -> Result<PartialMatrices<T>, DataError> {
    let n = dataset.n_items();
    let mut past = SessionMatrix::empty(n);
    let mut future = SessionMatrix::empty(n);
    for (k, s) in dataset.sessions.iter().enumerate() {
        let items = &s.items;
        if items.len() < 2 {
            return Err(DataError::SessionTooShort {
                session: k,
                len: items.len(),
                min: 2,
            });
        }
        if let Some(&bad) = items.iter().find(|&&i| i >= n) {
            return Err(DataError::ItemOutOfRange { index: bad, n });
        }
        for split in 1..items.len() {
            past.push_row(
                items[..split]
                    .iter()
                    .enumerate()
                    .map(|(p, &item)| (item, decay_weight::<T>(split - 1 - p, delta_pos))),
                T::max,
            );
            future.push_row(
                items[split..]
                    .iter()
                    .enumerate()
                    .map(|(d, &item)| (item, decay_weight::<T>(d, delta_pos))),
                T::max,
            );
        }
    }
    Ok(PartialMatrices { past, future })
}

/// Scales each row to sum to one.
pub trait RowNormalize: Sized {
    /// Rows with a nonpositive sum are an error unless `zero_passthrough` is
    /// set, in which case all-zero rows are returned unchanged.
    fn row_normalize(&self, zero_passthrough: bool) -> Result<Self, LinalgError>;
}

fn check_row_sum<T: Scalar>(row: usize, sum: T, zero_passthrough: bool) -> Result<bool, LinalgError> {
    if sum > T::zero() && sum.is_finite() {
        Ok(true)
    } else if sum == T::zero() && zero_passthrough {
        Ok(false)
    } else {
        Err(LinalgError::NonPositiveRowSum {
            row,
            sum: sum.as_f64(),
        })
    }
}

impl<T: Scalar> RowNormalize for SessionMatrix<T> {
    fn row_normalize(&self, zero_passthrough: bool) -> Result<Self, LinalgError> {
        let mut out = self.clone();
        for i in 0..self.rows() {
            let sum = self.row_sum(i);
            if check_row_sum(i, sum, zero_passthrough)? {
                out.scale_row(i, T::one() / sum);
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> RowNormalize for DenseMatrix<T> {
    fn row_normalize(&self, zero_passthrough: bool) -> Result<Self, LinalgError> {
        let mut out = self.clone();
        for i in 0..self.rows() {
            let row = out.row_mut(i);
            let sum: T = row.iter().copied().sum();
            // an all-zero row may still sum to zero with mixed signs; only pass
            // through rows that are genuinely empty
            let empty = row.iter().all(|&v| v == T::zero());
            if sum == T::zero() && !empty {
                return Err(LinalgError::NonPositiveRowSum { row: i, sum: 0.0 });
            }
            if check_row_sum(i, sum, zero_passthrough)? {
                let inv = T::one() / sum;
                for v in row.iter_mut() {
                    *v *= inv;
                }
            }
        }
        Ok(out)
    }
}

pub fn row_normalize<M: RowNormalize>(matrix: &M, zero_passthrough: bool) -> Result<M, LinalgError> {
    matrix.row_normalize(zero_passthrough)
}
