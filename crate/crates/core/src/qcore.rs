//! Dense statevectors over one to three qubits and projective single-qubit
//! measurement.
//!
//! Amplitude index convention: qubit 0 (Alice) is the most significant bit,
//! so the amplitude of `|q0 q1 q2>` sits at index `q0*4 + q1*2 + q2`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for normalization, trace and Hermiticity checks.
pub const NORM_TOL: f64 = 1e-9;

/// Branches whose probability falls below this carry no post-measurement state.
pub const ZERO_PROB: f64 = 1e-14;

pub const MAX_QUBITS: usize = 3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Validating constructor; rejects non-finite or unnormalized amplitudes.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let num_qubits = match amps.len() {
            2 => 1,
            4 => 2,
            8 => 3,
            n => return Err(Error::BadLength(n)),
        };
        if let Some(index) = amps.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { num_qubits, amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Computational basis state `|index>`.
    pub fn basis_state(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::BadLength(1 << num_qubits));
        }
        let dim = 1 << num_qubits;
        if index >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// Rescales arbitrary nonzero amplitudes onto the unit sphere.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized(norm * norm));
        }
        Self::new(amps.into_iter().map(|a| a / norm).collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amp(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// `self ⊗ other`, with `self` occupying the leading qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.num_qubits + other.num_qubits;
        if n > MAX_QUBITS {
            return Err(Error::BadLength(1 << n));
        }
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        Ok(Self { num_qubits: n, amps })
    }

    /// Applies a 2x2 unitary `[[u00, u01], [u10, u11]]` to one qubit.
    pub fn apply_single(&self, qubit: usize, u: [[Complex64; 2]; 2]) -> Result<StateVector> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let mut amps = self.amps.clone();
        for i0 in (0..self.dim()).filter(|i| i & mask == 0) {
            let i1 = i0 | mask;
            let (x0, x1) = (self.amps[i0], self.amps[i1]);
            amps[i0] = u[0][0] * x0 + u[0][1] * x1;
            amps[i1] = u[1][0] * x0 + u[1][1] * x1;
        }
        StateVector::new(amps)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    fn check_normalized(&self) -> Result<()> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(())
    }

    /// Bit mask selecting `qubit` in an amplitude index.
    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() < 1e-24 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)|{:0w$b}>", a.re, a.im, i, w = self.num_qubits)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "angle")]
pub enum MeasurementBasis {
    X,
    Y,
    Z,
    /// `b0 = sin(λ)|0> - cos(λ)|1>`, `b1 = cos(λ)|0> + sin(λ)|1>`.
    Lambda(f64),
}

impl MeasurementBasis {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasurementBasis::Lambda(angle) if !angle.is_finite() => Err(Error::InvalidBasis(
                format!("lambda basis needs a finite angle, got {angle}"),
            )),
            _ => Ok(()),
        }
    }

    /// `(first, second)` basis kets as raw amplitudes. Infallible for valid bases.
    fn kets(&self) -> [[Complex64; 2]; 2] {
        let h = FRAC_1_SQRT_2;
        let r = |x: f64| Complex64::new(x, 0.0);
        match *self {
            MeasurementBasis::X => [[r(h), r(h)], [r(h), r(-h)]],
            MeasurementBasis::Y => [
                [r(h), Complex64::new(0.0, h)],
                [r(h), Complex64::new(0.0, -h)],
            ],
            MeasurementBasis::Z => [[r(1.0), r(0.0)], [r(0.0), r(1.0)]],
            MeasurementBasis::Lambda(l) => [[r(l.sin()), r(-l.cos())], [r(l.cos()), r(l.sin())]],
        }
    }

    pub fn outcome(&self, index: usize) -> Outcome {
        match (self, index) {
            (MeasurementBasis::Lambda(_), 0) => Outcome::B0,
            (MeasurementBasis::Lambda(_), _) => Outcome::B1,
            (_, 0) => Outcome::Plus,
            _ => Outcome::Minus,
        }
    }
}

impl fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementBasis::X => write!(f, "X"),
            MeasurementBasis::Y => write!(f, "Y"),
            MeasurementBasis::Z => write!(f, "Z"),
            MeasurementBasis::Lambda(l) => write!(f, "Lambda({l})"),
        }
    }
}

/// Measurement outcome label. `Plus`/`Minus` are the ±1 eigenvalues of the
/// Pauli bases; `B0`/`B1` name which λ-basis vector occurred.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
    B0,
    B1,
}

impl Outcome {
    /// ±1 value; the first basis vector maps to +1.
    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus | Outcome::B0 => 1,
            Outcome::Minus | Outcome::B1 => -1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Outcome::Plus | Outcome::B0 => 0,
            Outcome::Minus | Outcome::B1 => 1,
        }
    }
}

/// Single-qubit basis kets `(ket_plus, ket_minus)`, or `(b0, b1)` for λ.
pub fn basis_vectors(basis: MeasurementBasis) -> Result<(StateVector, StateVector)> {
    basis.validate()?;
    let [k0, k1] = basis.kets();
    Ok((
        StateVector::new(k0.to_vec())?,
        StateVector::new(k1.to_vec())?,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeBranch {
    pub label: Outcome,
    pub probability: f64,
    /// Collapsed, renormalized state of all qubits; `None` for zero-probability branches.
    pub post_state: Option<StateVector>,
}

/// Projective measurement of one qubit; returns both branches in basis order.
pub fn measure_single(
    state: &StateVector,
    qubit: usize,
    basis: MeasurementBasis,
) -> Result<[OutcomeBranch; 2]> {
    state.check_qubit(qubit)?;
    state.check_normalized()?;
    basis.validate()?;
    let kets = basis.kets();
    let mask = state.mask(qubit);

    let branch = |k: usize| -> Result<OutcomeBranch> {
        let [e0, e1] = kets[k];
        let mut post = vec![ZERO; state.dim()];
        for i0 in (0..state.dim()).filter(|i| i & mask == 0) {
            let i1 = i0 | mask;
            let overlap = e0.conj() * state.amps[i0] + e1.conj() * state.amps[i1];
            post[i0] = e0 * overlap;
            post[i1] = e1 * overlap;
        }
        let probability: f64 = post.iter().map(|a| a.norm_sqr()).sum();
        let post_state = if probability > ZERO_PROB {
            let scale = probability.sqrt();
            Some(StateVector::new(post.into_iter().map(|a| a / scale).collect())?)
        } else {
            None
        };
        Ok(OutcomeBranch {
            label: basis.outcome(k),
            probability,
            post_state,
        })
    };
    Ok([branch(0)?, branch(1)?])
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointOutcome {
    /// One label per qubit, qubit 0 first.
    pub outcomes: Vec<Outcome>,
    pub probability: f64,
}

impl JointOutcome {
    /// Product of the ±1 signs of every qubit's outcome.
    pub fn product(&self) -> i8 {
        self.outcomes.iter().map(|o| o.sign()).product()
    }
}

/// Full outcome distribution when every qubit is measured in its own basis.
///
/// Entries are ordered with qubit 0's outcome most significant and the first
/// basis vector before the second. Each probability is the squared overlap of
/// the state with the product of the chosen basis kets.
pub fn joint_distribution(
    state: &StateVector,
    bases: &[MeasurementBasis],
) -> Result<Vec<JointOutcome>> {
    if bases.len() != state.num_qubits {
        return Err(Error::BasisCountMismatch {
            expected: state.num_qubits,
            got: bases.len(),
        });
    }
    state.check_normalized()?;
    for b in bases {
        b.validate()?;
    }
    let kets: Vec<_> = bases.iter().map(|b| b.kets()).collect();
    let n = state.num_qubits;
    let dim = state.dim();

    let mut out = Vec::with_capacity(dim);
    for choice in 0..dim {
        let pick = |q: usize| (choice >> (n - 1 - q)) & 1;
        let mut overlap = ZERO;
        for (index, amp) in state.amps.iter().enumerate() {
            let mut coeff = Complex64::new(1.0, 0.0);
            for (q, ket) in kets.iter().enumerate() {
                let bit = (index >> (n - 1 - q)) & 1;
                coeff *= ket[pick(q)][bit].conj();
            }
            overlap += coeff * amp;
        }
        out.push(JointOutcome {
            outcomes: (0..n).map(|q| bases[q].outcome(pick(q))).collect(),
            probability: overlap.norm_sqr(),
        });
    }
    Ok(out)
}

/// Expectation of the product of per-qubit ±1 outcomes.
pub fn product_expectation(state: &StateVector, bases: &[MeasurementBasis]) -> Result<f64> {
    Ok(joint_distribution(state, bases)?
        .iter()
        .map(|j| f64::from(j.product()) * j.probability)
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian, unit trace and positive semidefinite.
    pub fn new(num_qubits: usize, entries: Vec<Complex64>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::InvalidDensity(format!("{num_qubits} qubits")));
        }
        let dim = 1 << num_qubits;
        if entries.len() != dim * dim {
            return Err(Error::InvalidDensity(format!(
                "{} entries for dimension {dim}",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidDensity("non-finite entry".into()));
        }
        for i in 0..dim {
            for j in 0..dim {
                if (entries[i * dim + j] - entries[j * dim + i].conj()).norm() > NORM_TOL {
                    return Err(Error::InvalidDensity("not Hermitian".into()));
                }
            }
        }
        let rho = Self { num_qubits, entries };
        let trace = rho.trace();
        if (trace - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidDensity(format!("trace {trace}")));
        }
        let lowest = rho.eigenvalues()?.last().copied().unwrap_or(0.0);
        if lowest < -NORM_TOL {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {lowest}"
            )));
        }
        Ok(rho)
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let dim = state.dim();
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = state.amps[i] * state.amps[j].conj();
            }
        }
        Self {
            num_qubits: state.num_qubits,
            entries,
        }
    }

    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        let dim = 1 << num_qubits;
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0 / dim as f64, 0.0);
        }
        Self::new(num_qubits, entries)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).sum()
    }

    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&self.entries, self.dim())
    }

    pub fn determinant_2x2(&self) -> Option<f64> {
        (self.num_qubits == 1).then(|| {
            (self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0)).re
        })
    }
}

/// Partial trace of `|ψ><ψ|` onto the qubits in `keep`.
///
/// `keep` is interpreted as a set; the kept qubits retain their relative order
/// in the result.
pub fn reduced_density(state: &StateVector, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidSubset("keep set is empty".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    for &q in &kept {
        state.check_qubit(q)?;
    }
    state.check_normalized()?;
    let n = state.num_qubits;
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
    let k = kept.len();
    let dim = 1 << k;

    // Assemble a full index from kept-subsystem and traced-subsystem indices.
    let compose = |kept_idx: usize, traced_idx: usize| -> usize {
        let mut index = 0;
        for (pos, &q) in kept.iter().enumerate() {
            let bit = (kept_idx >> (k - 1 - pos)) & 1;
            index |= bit << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let bit = (traced_idx >> (traced.len() - 1 - pos)) & 1;
            index |= bit << (n - 1 - q);
        }
        index
    };

    let mut entries = vec![ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = ZERO;
            for t in 0..(1 << traced.len()) {
                acc += state.amps[compose(i, t)] * state.amps[compose(j, t)].conj();
            }
            entries[i * dim + j] = acc;
        }
    }
    DensityMatrix::new(k, entries)
}
