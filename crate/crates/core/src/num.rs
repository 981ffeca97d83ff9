//! Scalar abstraction and numerically careful link functions.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used by every numeric kernel in this crate.
///
/// `f64` is the working precision of the data layer and the CLI; `f32` is
/// supported for callers that want the smaller footprint.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Default
    + Debug
    + Display
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics if the value is not representable, which cannot happen for the
/// literal constants this crate feeds it.
pub fn real<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("constant not representable in scalar type")
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Log-odds of a probability in the open interval (0, 1).
pub fn logit<S: Scalar>(p: S) -> S {
    (p / (S::one() - p)).ln()
}

/// `ln(1 + exp(z))` without overflow.
pub fn softplus<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Dense row-major matrix, just large enough for the model code here.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    /// Builds a matrix from row slices; every row must have `cols` entries.
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn push_row(&mut self, row: &[S]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` via a Cholesky
/// factorization. Returns `None` when `A` is not positive definite (to
/// working precision), which the model fitters treat as an optimizer
/// breakdown.
pub fn cholesky_solve<S: Scalar>(a: &Matrix<S>, b: &[S]) -> Option<Vec<S>> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "matrix must be square");
    assert_eq!(b.len(), n, "right-hand side length mismatch");

    // Lower-triangular factor, row-major.
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.row(i)[j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > S::zero()) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }

    // Forward then backward substitution.
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0_f64), 1.0);
        assert_eq!(sigmoid(-800.0_f64), 0.0);
        assert!((sigmoid(0.0_f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &z in &[-5.0_f64, -0.3, 0.0, 1.7, 6.0] {
            assert!((logit(sigmoid(z)) - z).abs() < 1e-9);
        }
    }

    #[test]
    fn softplus_matches_naive_form_in_safe_range() {
        for &z in &[-20.0_f64, -1.0, 0.0, 2.5, 20.0] {
            assert!((softplus(z) - (1.0 + z.exp()).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_round_trip() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn cholesky_solves_a_known_system() {
        // A = [[4,2],[2,3]], b = (10, 8) → x = (1.75, 1.5).
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let x = cholesky_solve(&a, &[10.0, 8.0]).unwrap();
        assert!((x[0] - 1.75).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite_matrices() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky_solve(&a, &[1.0, 1.0]).is_none());
    }
}
