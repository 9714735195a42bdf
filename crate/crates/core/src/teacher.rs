//! Teacher matrices: temperature softmax over a scorer's single-item-session
//! logits, a count-based Markov scorer, and the `TCH1` file format.
//!
//! `TCH1` layout, all little-endian:
//!
//! ```text
//! b"TCH1" | u32 n | u8 dtype (0 = f64) | f64 tau | n*n f64 row-major | u32 n
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{ItemVocab, SessionDataset};
use crate::dense::DenseMatrix;
use crate::error::{FormatError, TeacherError};
use crate::io::{ByteReader, ByteWriter, DTYPE_F64};
use crate::scalar::Scalar;

pub const TEACHER_MAGIC: &[u8; 4] = b"TCH1";

/// Row-sum tolerance enforced when reading a teacher file.
pub const READ_ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Produces next-item logits for the single-item session `[item]`.
pub trait TeacherScorer<T>: Sync {
    fn n_items(&self) -> usize;

    fn score(&self, item: usize) -> Result<Vec<T>, TeacherError>;
}

/// Row-stochastic `n × n` matrix distilled from a scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherMatrix<T> {
    pub matrix: DenseMatrix<T>,
    pub tau: f64,
}

impl<T: Scalar> TeacherMatrix<T> {
    pub fn n_items(&self) -> usize {
        self.matrix.rows()
    }

    /// Checks nonnegativity and that every row sums to one within `tolerance`.
    pub fn validate(&self, tolerance: f64) -> Result<(), FormatError> {
        validate_stochastic(&self.matrix, tolerance)
    }

    /// Every row equal to `1/n`.
    pub fn uniform(n: usize) -> Self {
        let u = T::one() / T::of(n as f64);
        Self {
            matrix: DenseMatrix::from_fn(n, n, |_, _| u),
            tau: 1.0,
        }
    }
}

fn validate_stochastic<T: Scalar>(m: &DenseMatrix<T>, tolerance: f64) -> Result<(), FormatError> {
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, &v) in row.iter().enumerate() {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(FormatError::InvalidEntry {
                    row: i,
                    col: j,
                    value: v.as_f64(),
                });
            }
        }
        let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(FormatError::RowSum { row: i, sum, tolerance });
        }
    }
    Ok(())
}

/// Temperature softmax of one logit row, stabilized by subtracting the max.
pub fn softmax_row<T: Scalar>(logits: &[T], tau: f64) -> Vec<T> {
    let tau_t = T::of(tau);
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| ((l - max) / tau_t).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `T[i, :] = softmax(scorer.score(i) / τ)` for every item.
pub fn extract_teacher<T: Scalar, S: TeacherScorer<T> + ?Sized>(
    scorer: &S,
    n: usize,
    tau: f64,
) -> Result<TeacherMatrix<T>, TeacherError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TeacherError::InvalidTemperature(tau));
    }
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let logits = scorer.score(i)?;
            if logits.len() != n {
                return Err(TeacherError::WrongLength {
                    item: i,
                    expected: n,
                    found: logits.len(),
                });
            }
            if let Some((column, v)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(TeacherError::NonFiniteLogit {
                    item: i,
                    column,
                    value: v.as_f64(),
                });
            }
            Ok(softmax_row(&logits, tau))
        })
        .collect::<Result<_, _>>()?;
    let mut data = Vec::with_capacity(n * n);
    for r in rows {
        data.extend(r);
    }
    Ok(TeacherMatrix {
        matrix: DenseMatrix::from_vec(n, n, data),
        tau,
    })
}

/// Scores `log(count(i → j) + smoothing)` from consecutive pairs in training sessions.
#[derive(Clone, Debug)]
pub struct MarkovTeacher {
    counts: DenseMatrix<f64>,
    smoothing: f64,
}

impl MarkovTeacher {
    pub fn fit(train: &SessionDataset, smoothing: f64) -> Result<Self, TeacherError> {
        if train.is_empty() {
            return Err(TeacherError::EmptyTraining);
        }
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(TeacherError::InvalidSmoothing(smoothing));
        }
        let n = train.n_items();
        let mut counts = DenseMatrix::<f64>::zeros(n, n);
        for items in train.item_sequences() {
            for pair in items.windows(2) {
                counts[(pair[0], pair[1])] += 1.0;
            }
        }
        if smoothing == 0.0 && counts.as_slice().contains(&0.0) {
            return Err(TeacherError::InvalidSmoothing(smoothing));
        }
        Ok(Self { counts, smoothing })
    }

    pub fn counts(&self) -> &DenseMatrix<f64> {
        &self.counts
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }
}

impl<T: Scalar> TeacherScorer<T> for MarkovTeacher {
    fn n_items(&self) -> usize {
        self.counts.rows()
    }

    fn score(&self, item: usize) -> Result<Vec<T>, TeacherError> {
        if item >= self.counts.rows() {
            return Err(TeacherError::Scorer {
                item,
                message: "item index out of range".into(),
            });
        }
        Ok(self
            .counts
            .row(item)
            .iter()
            .map(|&c| T::of((c + self.smoothing).ln()))
            .collect())
    }
}

/// Writes a teacher in `TCH1` format. The vocabulary travels separately.
pub fn write_teacher<T: Scalar>(teacher: &TeacherMatrix<T>, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let bytes = encode_teacher(teacher);
    fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_teacher<T: Scalar>(teacher: &TeacherMatrix<T>) -> Vec<u8> {
    let n = teacher.n_items();
    let mut w = ByteWriter::with_capacity(4 + 4 + 1 + 8 + n * n * 8 + 4);
    w.bytes(TEACHER_MAGIC);
    w.u32(n as u32);
    w.u8(DTYPE_F64);
    w.f64(teacher.tau);
    for &v in teacher.matrix.as_slice() {
        w.f64(v.as_f64());
    }
    w.u32(n as u32);
    w.finish()
}

/// Reads and validates a `TCH1` file. When `vocab` is given, its size must match.
pub fn read_teacher<T: Scalar>(
    path: impl AsRef<Path>,
    vocab: Option<&Arc<ItemVocab>>,
) -> Result<TeacherMatrix<T>, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_teacher(&bytes, vocab.map(|v| v.len()))
}

pub fn decode_teacher<T: Scalar>(bytes: &[u8], expected_n: Option<usize>) -> Result<TeacherMatrix<T>, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(TEACHER_MAGIC)?;
    let n = r.u32()? as usize;
    let dtype = r.u8()?;
    if dtype != DTYPE_F64 {
        return Err(FormatError::UnsupportedDtype(dtype));
    }
    if let Some(expected) = expected_n {
        if expected != n {
            return Err(FormatError::VocabMismatch { expected, found: n });
        }
    }
    let tau = r.f64()?;
    r.require(n * n * 8 + 4)?;
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        data.push(T::of(r.f64()?));
    }
    let checksum = r.u32()?;
    if checksum as usize != n {
        return Err(FormatError::Checksum {
            expected: n as u32,
            found: checksum,
        });
    }
    r.finish()?;
    let teacher = TeacherMatrix {
        matrix: DenseMatrix::from_vec(n, n, data),
        tau,
    };
    teacher.validate(READ_ROW_SUM_TOLERANCE)?;
    Ok(teacher)
}
