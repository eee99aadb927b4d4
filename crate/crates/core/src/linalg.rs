//! Dense complex linear algebra helpers shared by every module.
//!
//! Operators are `DMatrix<Complex64>`. Superoperators act on operators through
//! column-major vectorization (nalgebra's native storage order), so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type Mat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (condition estimate {cond:e} exceeds {cond_max:e})")]
    Singular { cond: f64, cond_max: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> Mat {
    Mat::zeros(rows, cols)
}

/// Frobenius norm. Used for every residual in the crate; it bounds the
/// operator norm from above.
pub fn fro(m: &Mat) -> f64 {
    m.norm()
}

/// Largest singular value.
pub fn op_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

fn norm1(m: &Mat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse through a fully pivoted LU factorization. Refuses when the
/// 1-norm condition number exceeds `cond_max`.
pub fn inverse_checked(m: &Mat, cond_max: f64) -> Result<Mat, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let inv = m
        .clone()
        .full_piv_lu()
        .try_inverse()
        .ok_or(LinalgError::Singular {
            cond: f64::INFINITY,
            cond_max,
        })?;
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || cond > cond_max {
        return Err(LinalgError::Singular { cond, cond_max });
    }
    Ok(inv)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn expm(m: &Mat) -> Mat {
    m.exp()
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Serializes a complex number as `[re, im]`.
pub fn serialize_c64<S: serde::Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&[z.re, z.im], s)
}

/// Matrix unit `|i⟩⟨j|` of size `d`.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> Mat {
    let mut m = zeros(d, d);
    m[(i, j)] = c(1.0, 0.0);
    m
}

/// All `d²` matrix units, ordered by column-major vectorization index.
pub fn matrix_unit_basis(d: usize) -> Vec<Mat> {
    (0..d * d).map(|k| matrix_unit(d, k % d, k / d)).collect()
}

pub fn vectorize(x: &Mat) -> Mat {
    Mat::from_column_slice(x.len(), 1, x.as_slice())
}

pub fn unvectorize(v: &Mat, d: usize) -> Mat {
    Mat::from_column_slice(d, d, v.as_slice())
}

/// Self-adjoint part `(A + A†)/2`.
pub fn hermitian_part(a: &Mat) -> Mat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// Pauli and ladder matrices on C² with basis (|0⟩ = ground, |1⟩ = excited).
pub mod pauli {
    use super::{c, Mat};

    pub fn x() -> Mat {
        Mat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }
    pub fn y() -> Mat {
        Mat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }
    pub fn z() -> Mat {
        Mat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }
    /// Raising operator `|1⟩⟨0|`.
    pub fn plus() -> Mat {
        Mat::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)])
    }
    /// Lowering operator `|0⟩⟨1|`.
    pub fn minus() -> Mat {
        Mat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)])
    }
}
