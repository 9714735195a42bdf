//! Closed-form linear item-item models for session-based recommendation.
//!
//! The crate covers the whole offline pipeline: log ingestion and
//! chronological splitting ([`data`]), decayed partial-session matrices
//! ([`partial`]), the constrained-similarity / LIS / NIT / LINK solvers
//! ([`solver`]), teacher matrices distilled from any next-item scorer
//! ([`teacher`]), and inference plus evaluation ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the file formats store.

pub mod cli;
pub mod config;
pub mod data;
pub mod dense;
pub mod error;
pub mod eval;
mod io;
pub mod model;
pub mod partial;
pub mod scalar;
pub mod solver;
pub mod sparse;
pub mod synth;
pub mod teacher;

pub use data::{ItemVocab, SessionDataset, SplitTag};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, HeadTail, Protocol};
pub use scalar::Scalar;
pub use solver::{ModelKind, SolverConfig};

pub type Matrix = dense::DenseMatrix<f64>;
pub type SessionMatrix = sparse::SessionMatrix<f64>;
pub type PartialMatrices = partial::PartialMatrices<f64>;
pub type Model = model::ItemItemModel<f64>;
pub type Teacher = teacher::TeacherMatrix<f64>;
pub type InferenceVector = eval::InferenceVector<f64>;

pub type MatrixF32 = dense::DenseMatrix<f32>;
pub type SessionMatrixF32 = sparse::SessionMatrix<f32>;
pub type ModelF32 = model::ItemItemModel<f32>;
pub type TeacherF32 = teacher::TeacherMatrix<f32>;
