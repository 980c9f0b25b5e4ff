//! Symmetric positive-definite direct solve for the readout normal equations.

use crate::error::{LsmError, Result};
use crate::matrix::Matrix;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factors `a`. Only the lower triangle is read. A pivot that is not
    /// positive, or falls below `n * eps * max(diag)`, is reported as rank
    /// deficiency.
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LsmError::shape("cholesky", "square matrix", format!("{n}x{}", a.cols())));
        }
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
        let tol = n as f64 * f64::EPSILON * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return Err(LsmError::RankDeficient { column: j, pivot: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `L Lᵀ x = b` for every column of `b`, in place.
    fn solve_in_place(&self, b: &mut Matrix) {
        let n = self.l.rows();
        let l = &self.l;
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = b[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in i + 1..n {
                    s -= l[(k, i)] * b[(k, c)];
                }
                b[(i, c)] = s / l[(i, i)];
            }
        }
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`, followed by one
/// step of iterative refinement against the original system.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != a.rows() {
        return Err(LsmError::shape("spd solve", a.rows(), b.rows()));
    }
    let chol = Cholesky::new(a)?;
    let mut x = b.clone();
    chol.solve_in_place(&mut x);

    let mut r = residual(a, &x, b);
    chol.solve_in_place(&mut r);
    for i in 0..x.rows() {
        for c in 0..x.cols() {
            x[(i, c)] += r[(i, c)];
        }
    }
    if !x.all_finite() {
        return Err(LsmError::NonFinite("normal-equations solution"));
    }
    Ok(x)
}

/// `b - a x`.
pub fn residual(a: &Matrix, x: &Matrix, b: &Matrix) -> Matrix {
    let mut r = b.clone();
    for i in 0..a.rows() {
        let ai = a.row(i);
        for c in 0..x.cols() {
            let mut s = 0.0;
            for (k, &aik) in ai.iter().enumerate() {
                s += aik * x[(k, c)];
            }
            r[(i, c)] -= s;
        }
    }
    r
}
