//! Small dense Hermitian eigen-solver.
//!
//! A complex Hermitian `n x n` matrix `A = P + iQ` is handled through its real
//! symmetric embedding
//!
//! ```text
//! [ P  -Q ]
//! [ Q   P ]
//! ```
//!
//! which carries every eigenvalue of `A` twice. The embedding is diagonalized
//! with the cyclic Jacobi method, and matrix functions `f(A)` are read back out
//! of `f(embedding)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Off-diagonal convergence tolerance, relative to the Frobenius norm.
pub const JACOBI_TOL: f64 = 1e-12;
/// Maximum number of full Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 200;

/// Eigen-decomposition of a real symmetric matrix (row-major, `n x n`).
///
/// Returns eigenvalues and the orthogonal matrix whose columns are the
/// matching eigenvectors.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    debug_assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * frob {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
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
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    Ok((values, v))
}

fn embed(matrix: &[Complex64], n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut out = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = matrix[i * n + j];
            out[i * m + j] = z.re;
            out[i * m + (j + n)] = -z.im;
            out[(i + n) * m + j] = z.im;
            out[(i + n) * m + (j + n)] = z.re;
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, sorted in decreasing order.
pub fn hermitian_eigenvalues(matrix: &[Complex64], n: usize) -> Result<Vec<f64>> {
    let (mut values, _) = symmetric_eigen(&embed(matrix, n), 2 * n)?;
    values.sort_by(|a, b| b.total_cmp(a));
    // each eigenvalue appears twice in the embedding
    Ok(values.into_iter().step_by(2).collect())
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_function(
    matrix: &[Complex64],
    n: usize,
    f: impl Fn(f64) -> f64,
) -> Result<Vec<Complex64>> {
    let m = 2 * n;
    let (values, vectors) = symmetric_eigen(&embed(matrix, n), m)?;
    let fv: Vec<f64> = values.iter().map(|&x| f(x)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for (k, fk) in fv.iter().enumerate() {
                re += vectors[i * m + k] * fk * vectors[j * m + k];
                im += vectors[(i + n) * m + k] * fk * vectors[j * m + k];
            }
            out[i * n + j] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

pub fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}
