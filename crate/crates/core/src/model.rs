//! Trained item-item models, the training dispatch over model kinds, and the
//! `IIM1` model file.
//!
//! `IIM1` layout, all little-endian:
//!
//! ```text
//! b"IIM1" | u32 n | u8 kind | u8 dtype (0 = f64)
//!         | f64 lambda, xi, alpha, beta, tau, delta_pos
//!         | n*n f64 row-major | u32 n
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::data::{build_session_matrix, ItemVocab, SessionDataset};
use crate::dense::DenseMatrix;
use crate::error::{Error, FormatError, SolverError};
use crate::io::{ByteReader, ByteWriter, DTYPE_F64};
use crate::partial::{build_partial_matrices, RowNormalize};
use crate::scalar::Scalar;
use crate::solver::{
    extend_sessions, solve_constrained_similarity, solve_link, solve_lis, solve_nit, ModelKind, SolverConfig,
};
use crate::teacher::TeacherMatrix;

pub const MODEL_MAGIC: &[u8; 4] = b"IIM1";

/// Slack allowed on the diagonal cap of constrained models.
pub const DIAGONAL_TOLERANCE: f64 = 1e-9;

/// Dense item-item matrix `B` plus the settings that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemItemModel<T> {
    pub matrix: DenseMatrix<T>,
    pub vocab: Arc<ItemVocab>,
    pub kind: ModelKind,
    pub config: SolverConfig,
    pub delta_pos: f64,
}

impl<T: Scalar> ItemItemModel<T> {
    pub fn new(
        matrix: DenseMatrix<T>,
        vocab: Arc<ItemVocab>,
        kind: ModelKind,
        config: SolverConfig,
        delta_pos: f64,
    ) -> Result<Self, SolverError> {
        if !matrix.is_square() {
            return Err(SolverError::DimensionMismatch {
                what: "model columns",
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        if matrix.rows() != vocab.len() {
            return Err(SolverError::DimensionMismatch {
                what: "model size vs vocabulary",
                expected: vocab.len(),
                found: matrix.rows(),
            });
        }
        if kind.is_constrained() {
            let cap = config.xi + DIAGONAL_TOLERANCE;
            if let Some((j, d)) = matrix.diagonal().iter().enumerate().find(|(_, d)| d.as_f64() > cap) {
                return Err(SolverError::InvalidConfig(format!(
                    "diagonal entry {j} is {d}, above cap {}",
                    config.xi
                )));
            }
        }
        Ok(Self {
            matrix,
            vocab,
            kind,
            config,
            delta_pos,
        })
    }

    pub fn n_items(&self) -> usize {
        self.matrix.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub kind: ModelKind,
    pub n_items: usize,
    pub sessions: usize,
    /// Number of past/future pairs; zero for kinds that do not use them.
    pub pairs: usize,
    pub seconds: f64,
}

/// Trains `kind` on `train`. NIT and LINK need a teacher whose size matches the vocabulary.
pub fn train_model<T: Scalar>(
    train: &SessionDataset,
    kind: ModelKind,
    config: &SolverConfig,
    delta_pos: f64,
    teacher: Option<&TeacherMatrix<T>>,
) -> Result<(ItemItemModel<T>, TrainSummary), Error> {
    config.validate()?;
    if !(delta_pos.is_finite() && delta_pos > 0.0) {
        return Err(SolverError::InvalidConfig(format!("delta_pos must be positive, got {delta_pos}")).into());
    }
    let start = Instant::now();
    let n = train.n_items();
    let teacher = if kind.needs_teacher() {
        let t = teacher.ok_or_else(|| SolverError::InvalidConfig(format!("model kind {kind} requires a teacher")))?;
        if t.n_items() != n {
            return Err(SolverError::DimensionMismatch {
                what: "teacher size vs vocabulary",
                expected: n,
                found: t.n_items(),
            }
            .into());
        }
        Some(&t.matrix)
    } else {
        None
    };

    let mut pairs = 0;
    let matrix = match kind {
        ModelKind::Similarity => {
            let x = build_session_matrix::<T>(train)?;
            solve_constrained_similarity(&x, config.lambda, config.xi)?.matrix
        }
        ModelKind::Lis => {
            let x = build_session_matrix::<T>(train)?;
            let b_s = solve_constrained_similarity(&x, config.lambda, config.xi)?.matrix;
            let x_prime = extend_sessions(&x, &b_s, config.beta)?;
            solve_lis(&x_prime, config.lambda, config.xi)?.matrix
        }
        ModelKind::Nit => {
            let pm = build_partial_matrices::<T>(train, delta_pos)?;
            pairs = pm.pair_count();
            let y = pm.past.row_normalize(false)?;
            let z = pm.future.row_normalize(false)?;
            solve_nit(&y, &z, teacher.expect("checked above"), config.lambda)?
        }
        ModelKind::Link => {
            let x = build_session_matrix::<T>(train)?;
            let b_s = solve_constrained_similarity(&x, config.lambda, config.xi)?.matrix;
            let x_prime = extend_sessions(&x, &b_s, config.beta)?.row_normalize(true)?;
            let pm = build_partial_matrices::<T>(train, delta_pos)?;
            pairs = pm.pair_count();
            let y = pm.past.row_normalize(false)?;
            let z = pm.future.row_normalize(false)?;
            solve_link(&x_prime, &y, &z, teacher.expect("checked above"), config.alpha, config.lambda)?
        }
    };
    let model = ItemItemModel::new(matrix, train.vocab.clone(), kind, *config, delta_pos)?;
    let summary = TrainSummary {
        kind,
        n_items: n,
        sessions: train.len(),
        pairs,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, summary))
}

pub fn encode_model<T: Scalar>(model: &ItemItemModel<T>) -> Vec<u8> {
    let n = model.n_items();
    let mut w = ByteWriter::with_capacity(4 + 4 + 2 + 6 * 8 + n * n * 8 + 4);
    w.bytes(MODEL_MAGIC);
    w.u32(n as u32);
    w.u8(model.kind.tag());
    w.u8(DTYPE_F64);
    let c = &model.config;
    for v in [c.lambda, c.xi, c.alpha, c.beta, c.tau, model.delta_pos] {
        w.f64(v);
    }
    for &v in model.matrix.as_slice() {
        w.f64(v.as_f64());
    }
    w.u32(n as u32);
    w.finish()
}

pub fn write_model<T: Scalar>(model: &ItemItemModel<T>, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn decode_model<T: Scalar>(bytes: &[u8], vocab: Arc<ItemVocab>) -> Result<ItemItemModel<T>, Error> {
    let mut r = ByteReader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let n = r.u32()? as usize;
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag).ok_or(FormatError::UnknownKind(tag))?;
    let dtype = r.u8()?;
    if dtype != DTYPE_F64 {
        return Err(FormatError::UnsupportedDtype(dtype).into());
    }
    if n != vocab.len() {
        return Err(FormatError::VocabMismatch {
            expected: vocab.len(),
            found: n,
        }
        .into());
    }
    let config = SolverConfig {
        lambda: r.f64()?,
        xi: r.f64()?,
        alpha: r.f64()?,
        beta: r.f64()?,
        tau: r.f64()?,
    };
    let delta_pos = r.f64()?;
    r.require(n * n * 8 + 4)?;
    let mut data = Vec::with_capacity(n * n);
    for k in 0..n * n {
        let v = r.f64()?;
        if !v.is_finite() {
            return Err(FormatError::NonFinite { row: k / n, col: k % n }.into());
        }
        data.push(T::of(v));
    }
    let checksum = r.u32()?;
    if checksum as usize != n {
        return Err(FormatError::Checksum {
            expected: n as u32,
            found: checksum,
        }
        .into());
    }
    r.finish()?;
    Ok(ItemItemModel::new(DenseMatrix::from_vec(n, n, data), vocab, kind, config, delta_pos)?)
}

pub fn read_model<T: Scalar>(path: impl AsRef<Path>, vocab: Arc<ItemVocab>) -> Result<ItemItemModel<T>, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes, vocab)
}
