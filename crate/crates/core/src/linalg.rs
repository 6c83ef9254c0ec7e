//! Small dense symmetric linear algebra: cyclic Jacobi eigenvalues, Cholesky
//! solves, and matrix-free power iteration.
//!
//! Matrices are row-major `Vec<f64>` with an explicit dimension. The Fisher
//! blocks handled here are at most a few hundred rows wide.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        SymMatrix { dim, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Sweeps until the off-diagonal Frobenius mass drops below `tol` relative to
/// the total.
pub fn jacobi_eigenvalues(m: &SymMatrix, tol: f64) -> Result<Vec<f64>> {
    let n = m.dim;
    let mut a = m.data.clone();
    let total: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0 {
        return Ok(Vec::new());
    }
    let threshold = tol * total.max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= threshold {
            let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
            eig.sort_by(|x, y| x.total_cmp(y));
            return Ok(eig);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::Diagnostic(format!(
        "Jacobi eigenvalue iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &SymMatrix) -> Result<Self> {
        let n = m.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Diagnostic(format!(
                    "matrix is not positive definite (pivot {j} = {d:.3e})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

/// Result of a power iteration.
#[derive(Debug, Clone)]
pub struct PowerEstimate {
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given
/// only as a matrix-vector product.
///
/// Stops once the Rayleigh quotient changes by less than `tol` (relative) on
/// successive iterations. The start vector is a fixed pseudo-random vector so
/// results are reproducible.
pub fn power_iteration<F>(dim: usize, apply: F, tol: f64, max_iter: usize) -> Result<PowerEstimate>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Ok(PowerEstimate {
            eigenvalue: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    // hashed, not an arithmetic sequence: i*a mod 1 satisfies integer linear
    // relations and is exactly orthogonal to some structured eigenvectors
    let mut v: Vec<f64> = (0..dim)
        .map(|i| 0.5 + (crate::combinatorics::splitmix64(i as u64) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    normalize(&mut v);
    let mut w = vec![0.0; dim];
    let mut last = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        let rq: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        residual = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (b - rq * a).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(PowerEstimate {
                eigenvalue: 0.0,
                iterations: it,
                residual: 0.0,
            });
        }
        if (rq - last).abs() <= tol * rq.abs().max(1.0) && residual <= tol.sqrt() * norm {
            return Ok(PowerEstimate {
                eigenvalue: rq,
                iterations: it,
                residual,
            });
        }
        last = rq;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    Err(Error::Diagnostic(format!(
        "power iteration did not converge in {max_iter} iterations (residual {residual:.3e})"
    )))
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}
