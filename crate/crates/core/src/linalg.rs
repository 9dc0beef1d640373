//! Minimal dense linear algebra used by the flow and the neural forecaster.
//!
//! Row-major matrices over [`Scalar`], matrix-vector products in both
//! orientations, and a Cholesky solve for the ridge normal equations. Kept
//! deliberately small; nothing here is performance-critical beyond cache
//! friendliness.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut S {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// `out = self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = S::zero();
            for (w, xv) in row.iter().zip(x) {
                acc += *w * *xv;
            }
            out[r] = acc;
        }
    }

    /// `out = self^T * x`, the adjoint product used in backpropagation.
    pub fn matvec_t(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for v in out.iter_mut() {
            *v = S::zero();
        }
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (o, w) in out.iter_mut().zip(row) {
                *o += *w * xr;
            }
        }
    }

    /// Rank-one accumulation `self += scale * a * b^T`.
    pub fn add_outer(&mut self, scale: S, a: &[S], b: &[S]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for r in 0..self.rows {
            let f = scale * a[r];
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, bv) in row.iter_mut().zip(b) {
                *w += f * *bv;
            }
        }
    }
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky<S> {
    n: usize,
    l: Vec<S>,
}

/// Factor a symmetric positive-definite matrix given as a row-major square
/// slice. Returns `None` when a pivot is not strictly positive, which is the
/// singular / indefinite case.
pub fn cholesky<S: Scalar>(a: &Mat<S>) -> Option<Cholesky<S>> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= S::zero() || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(Cholesky { n, l })
}

impl<S: Scalar> Cholesky<S> {
    /// Solve `A x = b` using the factorization.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut y = vec![S::zero(); n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * y[k];
            }
            y[i] = sum / self.l[i * n + i];
        }
        let mut x = vec![S::zero(); n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_adjoint_agree_with_naive_products() {
        let m = Mat::from_fn(3, 2, |r, c| (r * 2 + c) as f64 + 0.5);
        let mut out = vec![0.0; 3];
        m.matvec(&[1.0, -2.0], &mut out);
        assert_eq!(out, vec![0.5 - 3.0, 2.5 - 7.0, 4.5 - 11.0]);

        let mut tout = vec![0.0; 2];
        m.matvec_t(&[1.0, 1.0, 1.0], &mut tout);
        assert_eq!(tout, vec![0.5 + 2.5 + 4.5, 1.5 + 3.5 + 5.5]);
    }

    #[test]
    fn cholesky_solves_a_known_spd_system() {
        // A = [[4,2],[2,3]], b = [2,1] => x = [0.5, 0].
        let a = Mat::<f64>::from_fn(2, 2, |r, c| [[4.0, 2.0], [2.0, 3.0]][r][c]);
        let x = cholesky(&a).expect("SPD").solve(&[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_singular_matrices() {
        let a = Mat::<f64>::from_fn(2, 2, |r, c| [[1.0, 1.0], [1.0, 1.0]][r][c]);
        assert!(cholesky(&a).is_none());
    }
}
