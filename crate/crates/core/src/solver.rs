//! Closed-form solvers for the item-item models.
//!
//! * constrained similarity: `min ‖X − XB‖² + λ‖B‖²` s.t. `diag(B) ≤ ξ`
//! * LIS: the same problem on the extended matrix `X′ = βXB̂ˢ + (1−β)X`
//! * NIT: `min ‖Z̃ − ỸB‖² + λ‖T − B‖²`
//! * LINK: `min α‖X̃′ − X̃′B‖² + (1−α)‖Z̃ − ỸB‖² + λ‖T − B‖²`
//!
//! Every solve factors `Gram + λI` with Cholesky. Gram matrices are
//! accumulated from rows, so only `n × n` dense objects are built besides the
//! extended session matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::SolverError;
use crate::scalar::Scalar;
use crate::sparse::SessionMatrix;

/// Which closed form produced a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "s", alias = "S")]
    Similarity,
    #[serde(rename = "lis", alias = "LIS")]
    Lis,
    #[serde(rename = "nit", alias = "NIT")]
    Nit,
    #[serde(rename = "link", alias = "LINK")]
    Link,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            Self::Similarity => 0,
            Self::Lis => 1,
            Self::Nit => 2,
            Self::Link => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Self::Similarity,
            1 => Self::Lis,
            2 => Self::Nit,
            3 => Self::Link,
            _ => return None,
        })
    }

    /// Whether the kind carries the diagonal cap.
    pub fn is_constrained(self) -> bool {
        matches!(self, Self::Similarity | Self::Lis)
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, Self::Nit | Self::Link)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Similarity => "s",
            Self::Lis => "lis",
            Self::Nit => "nit",
            Self::Link => "link",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(Self::Similarity),
            "lis" => Ok(Self::Lis),
            "nit" => Ok(Self::Nit),
            "link" => Ok(Self::Link),
            other => Err(format!("unknown model kind {other:?} (expected s, lis, nit or link)")),
        }
    }
}

/// Hyperparameters shared by all solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Ridge weight; strictly positive.
    pub lambda: f64,
    /// Diagonal cap in `[0, 1)`.
    pub xi: f64,
    /// Similarity/transition balance in `[0, 1]`.
    pub alpha: f64,
    /// Self-distillation mix in `[0, 1]`.
    pub beta: f64,
    /// Teacher softmax temperature; strictly positive.
    pub tau: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            xi: 0.0,
            alpha: 0.5,
            beta: 0.5,
            tau: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        check_lambda(self.lambda)?;
        check_xi(self.xi)?;
        check_unit("alpha", self.alpha)?;
        check_unit("beta", self.beta)?;
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(SolverError::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<(), SolverError> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(format!("lambda must be positive and finite, got {lambda}")))
    }
}

fn check_xi(xi: f64) -> Result<(), SolverError> {
    if (0.0..1.0).contains(&xi) {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(format!("xi must lie in [0, 1), got {xi}")))
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), SolverError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<(), SolverError> {
    if expected == found {
        Ok(())
    } else {
        Err(SolverError::DimensionMismatch { what, expected, found })
    }
}

/// Intermediate quantities of a constrained solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverInternals<T> {
    /// `XᵀX` (or `X′ᵀX′`).
    pub gram: DenseMatrix<T>,
    /// `(gram + λI)⁻¹`.
    pub p: DenseMatrix<T>,
    /// Column scaling; `γ = μ + λ`.
    pub gamma: Vec<T>,
    /// KKT multipliers of the diagonal constraint, all nonnegative.
    pub mu: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedSolution<T> {
    pub matrix: DenseMatrix<T>,
    pub internals: SolverInternals<T>,
}

/// Solves the diagonal-capped ridge problem given its Gram matrix:
/// `B = I − P·diag(γ)` with `γ_j = λ` when `1 − λP_jj ≤ ξ`, else `(1 − ξ)/P_jj`.
pub fn solve_from_gram<T: Scalar>(
    gram: DenseMatrix<T>,
    lambda: f64,
    xi: f64,
) -> Result<ConstrainedSolution<T>, SolverError> {
    check_lambda(lambda)?;
    check_xi(xi)?;
    let n = gram.rows();
    check_dim("gram columns", n, gram.cols())?;
    let lam = T::of(lambda);
    let xi_t = T::of(xi);
    let mut regularized = gram.clone();
    regularized.add_to_diagonal(lam);
    let p = regularized.cholesky()?.inverse();

    let mut gamma = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for j in 0..n {
        let pjj = p[(j, j)];
        // no epsilon slack: ties take the unconstrained branch
        let g = if T::one() - lam * pjj <= xi_t {
            lam
        } else {
            (T::one() - xi_t) / pjj
        };
        gamma.push(g);
        mu.push(g - lam);
    }

    let matrix = DenseMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id - p[(i, j)] * gamma[j]
    });
    Ok(ConstrainedSolution {
        matrix,
        internals: SolverInternals { gram, p, gamma, mu },
    })
}

/// Constrained similarity model on a session matrix.
pub fn solve_constrained_similarity<T: Scalar>(
    x: &SessionMatrix<T>,
    lambda: f64,
    xi: f64,
) -> Result<ConstrainedSolution<T>, SolverError> {
    if x.cols() == 0 {
        return Err(SolverError::InvalidConfig("session matrix has no items".into()));
    }
    solve_from_gram(x.gram(), lambda, xi)
}

/// `X′ = β·X·B̂ˢ + (1 − β)·X`.
pub fn extend_sessions<T: Scalar>(
    x: &SessionMatrix<T>,
    b_s: &DenseMatrix<T>,
    beta: f64,
) -> Result<DenseMatrix<T>, SolverError> {
    check_unit("beta", beta)?;
    check_dim("similarity matrix rows", x.cols(), b_s.rows())?;
    check_dim("similarity matrix columns", x.cols(), b_s.cols())?;
    let propagated = x.mul_dense(b_s);
    let beta_t = T::of(beta);
    Ok(propagated.affine_mix(beta_t, &x.to_dense(), T::one() - beta_t))
}

/// LIS: the constrained solve on an extended session matrix.
pub fn solve_lis<T: Scalar>(
    x_prime: &DenseMatrix<T>,
    lambda: f64,
    xi: f64,
) -> Result<ConstrainedSolution<T>, SolverError> {
    if x_prime.cols() == 0 {
        return Err(SolverError::InvalidConfig("session matrix has no items".into()));
    }
    solve_from_gram(x_prime.gram(), lambda, xi)
}

/// `(gram + λI)⁻¹ (cross + λ·prior)`.
pub fn solve_with_prior<T: Scalar>(
    mut gram: DenseMatrix<T>,
    cross: &DenseMatrix<T>,
    prior: &DenseMatrix<T>,
    lambda: f64,
) -> Result<DenseMatrix<T>, SolverError> {
    check_lambda(lambda)?;
    let n = gram.rows();
    check_dim("gram columns", n, gram.cols())?;
    check_dim("cross-term rows", n, cross.rows())?;
    check_dim("cross-term columns", n, cross.cols())?;
    check_dim("teacher rows", n, prior.rows())?;
    check_dim("teacher columns", n, prior.cols())?;
    let lam = T::of(lambda);
    gram.add_to_diagonal(lam);
    let rhs = cross.affine_mix(T::one(), prior, lam);
    Ok(gram.cholesky()?.solve_matrix(&rhs))
}

fn check_pairs<T: Scalar>(y: &SessionMatrix<T>, z: &SessionMatrix<T>, t: &DenseMatrix<T>) -> Result<(), SolverError> {
    check_dim("future rows", y.rows(), z.rows())?;
    check_dim("future columns", y.cols(), z.cols())?;
    check_dim("teacher rows", y.cols(), t.rows())?;
    check_dim("teacher columns", y.cols(), t.cols())
}

/// NIT: `(ỸᵀỸ + λI)⁻¹ (ỸᵀZ̃ + λT)` on row-normalized partial matrices.
pub fn solve_nit<T: Scalar>(
    y_norm: &SessionMatrix<T>,
    z_norm: &SessionMatrix<T>,
    teacher: &DenseMatrix<T>,
    lambda: f64,
) -> Result<DenseMatrix<T>, SolverError> {
    check_pairs(y_norm, z_norm, teacher)?;
    solve_with_prior(y_norm.gram(), &y_norm.cross_gram(z_norm), teacher, lambda)
}

/// LINK: the NIT closed form on the stacked design `[√α X̃′; √(1−α) Ỹ]` with
/// targets `[√α X̃′; √(1−α) Z̃]`. The stacked Gram and cross terms are formed
/// as `α·X̃′ᵀX̃′ + (1−α)·ỸᵀỸ` and `α·X̃′ᵀX̃′ + (1−α)·ỸᵀZ̃`.
pub fn solve_link<T: Scalar>(
    x_prime_norm: &DenseMatrix<T>,
    y_norm: &SessionMatrix<T>,
    z_norm: &SessionMatrix<T>,
    teacher: &DenseMatrix<T>,
    alpha: f64,
    lambda: f64,
) -> Result<DenseMatrix<T>, SolverError> {
    check_unit("alpha", alpha)?;
    check_pairs(y_norm, z_norm, teacher)?;
    check_dim("extended session columns", y_norm.cols(), x_prime_norm.cols())?;
    let a = T::of(alpha);
    let b = T::one() - a;
    let similarity_gram = x_prime_norm.gram();
    let gram = similarity_gram.affine_mix(a, &y_norm.gram(), b);
    let cross = similarity_gram.affine_mix(a, &y_norm.cross_gram(z_norm), b);
    solve_with_prior(gram, &cross, teacher, lambda)
}

/// `‖X − XB‖² + λ‖B‖²`.
pub fn similarity_objective<T: Scalar>(x: &DenseMatrix<T>, b: &DenseMatrix<T>, lambda: f64) -> T {
    x.sub(&x.matmul(b)).squared_frobenius_norm() + T::of(lambda) * b.squared_frobenius_norm()
}

/// `‖Z − YB‖² + λ‖T − B‖²`.
pub fn transition_objective<T: Scalar>(
    y: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    teacher: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    lambda: f64,
) -> T {
    z.sub(&y.matmul(b)).squared_frobenius_norm() + T::of(lambda) * teacher.sub(b).squared_frobenius_norm()
}

/// `α‖X̃′ − X̃′B‖² + (1−α)‖Z − YB‖² + λ‖T − B‖²`.
pub fn link_objective<T: Scalar>(
    x_prime_norm: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    teacher: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    alpha: f64,
    lambda: f64,
) -> T {
    let a = T::of(alpha);
    a * x_prime_norm.sub(&x_prime_norm.matmul(b)).squared_frobenius_norm()
        + (T::one() - a) * z.sub(&y.matmul(b)).squared_frobenius_norm()
        + T::of(lambda) * teacher.sub(b).squared_frobenius_norm()
}
