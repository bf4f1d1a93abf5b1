//! Concurrence and three-tangle for pure three-qubit states.
//!
//! Two-qubit reductions of a pure three-qubit state are mixed, so pairwise
//! concurrences go through Wootters' spectral construction:
//! `C(ρ) = max(0, λ1 - λ2 - λ3 - λ4)` where the `λi` are the decreasing square
//! roots of the eigenvalues of `√ρ ρ̃ √ρ` and `ρ̃ = (σy⊗σy) ρ* (σy⊗σy)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_function, matmul};
use crate::qcore::{reduced_density, DensityMatrix, StateVector};

/// Lower bound accepted for a computed three-tangle before clamping to zero.
pub const TANGLE_NEG_TOL: f64 = 1e-9;

/// Spectral values below this are treated as exact zeros before taking
/// square roots, so that round-off in null spaces does not leak into the
/// concurrence at the `sqrt(eps)` scale.
const SPECTRAL_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangleReport {
    /// `C_{P(QR)}`.
    pub c_one_rest: f64,
    /// `C_{PQ}` with `Q` the lower-indexed of the other two qubits.
    pub c_pq: f64,
    /// `C_{PR}`.
    pub c_pr: f64,
    pub tau: f64,
    pub pivot_qubit: usize,
}

fn require_qubits(state: &StateVector, expected: usize) -> Result<()> {
    if state.num_qubits() != expected {
        return Err(Error::WrongQubitCount {
            expected,
            got: state.num_qubits(),
        });
    }
    Ok(())
}

/// `σy ⊗ σy` as a 4x4 matrix in the computational basis.
fn sigma_yy() -> Vec<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    #[rustfmt::skip]
    let m = vec![
        z,    z,   z,   -one,
        z,    z,   one,  z,
        z,    one, z,    z,
        -one, z,   z,    z,
    ];
    m
}

/// `|<ψ|σy⊗σy|ψ*>|` for a pure two-qubit state.
pub fn concurrence_pure2(state: &StateVector) -> Result<f64> {
    require_qubits(state, 2)?;
    let yy = sigma_yy();
    let amps = state.amps();
    let flipped: Vec<Complex64> = (0..4)
        .map(|i| (0..4).map(|j| yy[i * 4 + j] * amps[j].conj()).sum())
        .collect();
    let overlap: Complex64 = amps
        .iter()
        .zip(&flipped)
        .map(|(a, f)| a.conj() * f)
        .sum();
    Ok(overlap.norm().min(1.0))
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence_mixed2(rho: &DensityMatrix) -> Result<f64> {
    if rho.num_qubits() != 2 {
        return Err(Error::WrongQubitCount {
            expected: 2,
            got: rho.num_qubits(),
        });
    }
    let yy = sigma_yy();
    let conj: Vec<Complex64> = rho.entries().iter().map(|z| z.conj()).collect();
    let rho_tilde = matmul(&matmul(&yy, &conj, 4), &yy, 4);

    let floor = |x: f64| if x > SPECTRAL_FLOOR { x.sqrt() } else { 0.0 };
    let sqrt_rho = hermitian_function(rho.entries(), 4, floor)?;
    let mut m = matmul(&matmul(&sqrt_rho, &rho_tilde, 4), &sqrt_rho, 4);
    // symmetrize away round-off so the Hermitian solver sees an exact Hermitian input
    for i in 0..4 {
        for j in i..4 {
            let avg = (m[i * 4 + j] + m[j * 4 + i].conj()) * 0.5;
            m[i * 4 + j] = avg;
            m[j * 4 + i] = avg.conj();
        }
    }
    let lambdas: Vec<f64> = hermitian_eigenvalues(&m, 4)?
        .into_iter()
        .map(floor)
        .collect();
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

/// Concurrence of the reduced state of qubits `p` and `q`.
pub fn pair_concurrence(state: &StateVector, p: usize, q: usize) -> Result<f64> {
    require_qubits(state, 3)?;
    if p == q {
        return Err(Error::InvalidSubset(format!("pair ({p}, {q})")));
    }
    concurrence_mixed2(&reduced_density(state, &[p, q])?)
}

/// `C_{P(QR)} = 2 sqrt(det ρ_P)` for a pure three-qubit state.
pub fn one_rest_concurrence(state: &StateVector, pivot: usize) -> Result<f64> {
    require_qubits(state, 3)?;
    let rho = reduced_density(state, &[pivot])?;
    let det = rho.determinant_2x2().expect("single-qubit reduction");
    Ok((2.0 * det.max(0.0).sqrt()).min(1.0))
}

/// Three-tangle with qubit A as the pivot.
pub fn three_tangle(state: &StateVector) -> Result<TangleReport> {
    three_tangle_with_pivot(state, 0)
}

pub fn three_tangle_with_pivot(state: &StateVector, pivot: usize) -> Result<TangleReport> {
    require_qubits(state, 3)?;
    if pivot >= 3 {
        return Err(Error::QubitOutOfRange {
            qubit: pivot,
            num_qubits: 3,
        });
    }
    let others: Vec<usize> = (0..3).filter(|&q| q != pivot).collect();
    let c_one_rest = one_rest_concurrence(state, pivot)?;
    let c_pq = pair_concurrence(state, pivot, others[0])?;
    let c_pr = pair_concurrence(state, pivot, others[1])?;
    let raw = c_one_rest * c_one_rest - c_pq * c_pq - c_pr * c_pr;
    if raw < -TANGLE_NEG_TOL {
        return Err(Error::InvalidParameter(format!(
            "three-tangle {raw} below tolerance"
        )));
    }
    Ok(TangleReport {
        c_one_rest,
        c_pq,
        c_pr,
        tau: raw.clamp(0.0, 1.0),
        pivot_qubit: pivot,
    })
}

/// `C_AB + C_BC + C_CA`.
pub fn concurrence_sum(state: &StateVector) -> Result<f64> {
    require_qubits(state, 3)?;
    Ok(pair_concurrence(state, 0, 1)? + pair_concurrence(state, 1, 2)? + pair_concurrence(state, 2, 0)?)
}
