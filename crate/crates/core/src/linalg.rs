//! Dense linear-algebra primitives shared by the rest of the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices. Rank decisions are
//! always made relative to the largest singular value, so a single relative
//! tolerance controls every rank-based classification downstream.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative rank tolerance: `sigma_i > DEFAULT_RANK_TOL * sigma_max` counts.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Vectors shorter than this cannot define a projector.
pub const ZERO_VECTOR_TOL: f64 = 1e-12;

/// `W^T V` with a condition number above this is treated as singular.
pub const DEFECTIVE_CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("vector norm {norm:e} is too small to define a projector")]
    ZeroVector { norm: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("zero eigenvalue is defective (condition number of W^T V = {condition:e})")]
    DefectiveZeroEigenvalue { condition: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Orthonormal basis of a linear subspace, stored as the columns of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    vectors: Matrix,
}

impl SubspaceBasis {
    /// Wraps columns that the caller guarantees to be orthonormal.
    pub(crate) fn from_orthonormal_columns(vectors: Matrix) -> Self {
        Self { vectors }
    }

    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            vectors: Matrix::zeros(ambient_dim, 0),
        }
    }

    /// The standard basis of the whole ambient space.
    pub fn full(ambient_dim: usize) -> Self {
        Self {
            vectors: Matrix::identity(ambient_dim, ambient_dim),
        }
    }

    /// Orthonormal basis of the span of the given vectors (rank decided at `tol_rel`).
    pub fn span_of(vectors: &[Vector], ambient_dim: usize, tol_rel: f64) -> Result<Self> {
        for v in vectors {
            if v.len() != ambient_dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: ambient_dim,
                    found: v.len(),
                });
            }
        }
        if vectors.is_empty() {
            return Ok(Self::empty(ambient_dim));
        }
        column_space_basis(&Matrix::from_columns(vectors), tol_rel)
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    /// Basis vectors as the columns of an `ambient_dim x dim` matrix.
    pub fn as_matrix(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vectors(&self) -> impl Iterator<Item = Vector> + '_ {
        self.vectors.column_iter().map(|c| c.into_owned())
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &Vector) -> Vector {
        if self.is_empty() {
            return Vector::zeros(v.len());
        }
        &self.vectors * (self.vectors.transpose() * v)
    }

    /// Distance from `v` to the subspace.
    pub fn residual(&self, v: &Vector) -> f64 {
        (v - self.project(v)).norm()
    }
}

/// `I - x x^T / |x|^2`, the orthogonal projector onto the complement of `x`.
pub fn projector(x: &Vector) -> Result<Matrix> {
    let norm = x.norm();
    if !norm.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if norm <= ZERO_VECTOR_TOL {
        return Err(LinalgError::ZeroVector { norm });
    }
    let d = x.len();
    Ok(Matrix::identity(d, d) - (x * x.transpose()) / (norm * norm))
}

/// Thin singular value decomposition `A = U diag(sigma) V^T`.
///
/// `v` is always the full `cols x cols` orthogonal factor, so wide matrices
/// still expose a complete null-space basis. Singular values are sorted in
/// descending order; columns of `u` belonging to zero singular values are zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub singular_values: Vec<f64>,
    pub u: Matrix,
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns are orthogonalized pairwise by plane rotations until every pair is
/// orthogonal to working precision; the column norms are then the singular
/// values. Small singular values come out with high relative accuracy, which
/// is what rank decisions need.
pub fn svd(a: &Matrix) -> Result<Svd> {
    ensure_finite(a)?;
    let (rows, cols) = a.shape();
    let mut w = a.clone();
    let mut v = Matrix::identity(cols, cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (x, y) = (w[(r, p)], w[(r, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (w[(r, p)], w[(r, q)]);
                    w[(r, p)] = c * x - s * y;
                    w[(r, q)] = s * x + c * y;
                }
                for r in 0..cols {
                    let (x, y) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * x - s * y;
                    v[(r, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let singular_values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let u = Matrix::from_fn(rows, cols, |r, k| {
        let i = order[k];
        if norms[i] > 0.0 {
            w[(r, i)] / norms[i]
        } else {
            0.0
        }
    });
    let v = Matrix::from_fn(cols, cols, |r, k| v[(r, order[k])]);
    Ok(Svd {
        singular_values,
        u,
        v,
    })
}

/// Singular values in descending order (`cols` of them).
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.singular_values)
}

/// Number of singular values strictly above `tol_rel * sigma_max`.
pub fn numeric_rank(m: &Matrix, tol_rel: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let Some(&max) = s.first() else {
        return Ok(0);
    };
    if max == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > tol_rel * max).count())
}

/// Orthonormal basis of the right null space of `m`.
pub fn nullspace_basis(m: &Matrix, tol_rel: f64) -> Result<SubspaceBasis> {
    let dec = svd(m)?;
    let max = dec.singular_values.first().copied().unwrap_or(0.0);
    let cols: Vec<_> = dec
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| max == 0.0 || s <= tol_rel * max)
        .map(|(i, _)| dec.v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return Ok(SubspaceBasis::empty(m.ncols()));
    }
    Ok(SubspaceBasis::from_orthonormal_columns(Matrix::from_columns(&cols)))
}

/// Orthonormal basis of the column space of `m`.
pub fn column_space_basis(m: &Matrix, tol_rel: f64) -> Result<SubspaceBasis> {
    let dec = svd(m)?;
    let max = dec.singular_values.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return Ok(SubspaceBasis::empty(m.nrows()));
    }
    let cols: Vec<_> = dec
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tol_rel * max)
        .map(|(i, _)| dec.u.column(i).into_owned())
        .collect();
    Ok(SubspaceBasis::from_orthonormal_columns(Matrix::from_columns(&cols)))
}

/// Minimum-norm least-squares solution of `a x ≈ b`.
pub fn least_squares(a: &Matrix, b: &Vector, tol_rel: f64) -> Result<Vector> {
    if a.nrows() != b.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    let dec = svd(a)?;
    let max = dec.singular_values.first().copied().unwrap_or(0.0);
    let mut x = Vector::zeros(a.ncols());
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s > tol_rel * max && s > 0.0 {
            let coeff = dec.u.column(i).dot(b) / s;
            x += dec.v.column(i) * coeff;
        }
    }
    Ok(x)
}

/// True iff every vector of `inner` lies within `tol` of `span(outer)`.
pub fn subspace_contains(outer: &SubspaceBasis, inner: &SubspaceBasis, tol: f64) -> Result<bool> {
    if outer.ambient_dim() != inner.ambient_dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: outer.ambient_dim(),
            found: inner.ambient_dim(),
        });
    }
    Ok(inner.vectors().all(|v| outer.residual(&v) < tol))
}

/// Spectral projector onto the zero eigenspace of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroEigenProjector {
    pub matrix: Matrix,
    /// `false` when the matrix is nonsingular; `matrix` is then all zeros.
    pub has_zero_eigenvalue: bool,
}

/// `V (W^T V)^{-1} W^T` from right (`V`) and left (`W`) null-space bases.
///
/// The result projects onto `Null(M)` along the range of `M`. It only exists
/// when the zero eigenvalue is semisimple, i.e. when `W^T V` is invertible.
pub fn spectral_projector_zero(m: &Matrix, tol_rel: f64) -> Result<ZeroEigenProjector> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let right = nullspace_basis(m, tol_rel)?;
    let left = nullspace_basis(&m.transpose(), tol_rel)?;
    if right.is_empty() {
        return Ok(ZeroEigenProjector {
            matrix: Matrix::zeros(rows, cols),
            has_zero_eigenvalue: false,
        });
    }
    let v = right.as_matrix();
    let w = left.as_matrix();
    let gram = w.transpose() * v;
    let s = singular_values(&gram)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if gram.nrows() != gram.ncols() || condition > DEFECTIVE_CONDITION_LIMIT {
        return Err(LinalgError::DefectiveZeroEigenvalue { condition });
    }
    let inv = gram
        .clone()
        .try_inverse()
        .ok_or(LinalgError::DefectiveZeroEigenvalue { condition })?;
    Ok(ZeroEigenProjector {
        matrix: v * inv * w.transpose(),
        has_zero_eigenvalue: true,
    })
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
