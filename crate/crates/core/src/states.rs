//! Parametrized three-qubit state families: the GHZ class, the W class, and
//! the Wₙ family, plus the standard GHZ and W states.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{StateVector, NORM_TOL};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Amplitude indices of `|100>`, `|010>`, `|001>`.
const W_INDICES: [usize; 3] = [4, 2, 1];

/// `sin(θ)|000> + cos(θ)|111>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhzClassParams {
    pub theta: f64,
}

impl GhzClassParams {
    pub fn new(theta: f64) -> Self {
        Self { theta }
    }

    /// True outside `(0, π/4]`, the range the GHZ class is usually quoted on.
    /// Values up to `π/2` are still accepted.
    pub fn outside_canonical_range(&self) -> bool {
        !(self.theta > 0.0 && self.theta <= FRAC_PI_4 + 1e-15)
    }
}

/// `a|100> + b|010> + c|001>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WClassParams {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

impl WClassParams {
    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Result<Self> {
        let norm = a.norm_sqr() + b.norm_sqr() + c.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { a, b, c })
    }

    pub fn real(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(a.into(), b.into(), c.into())
    }

    /// True when every amplitude is real and nonnegative, the slice on which
    /// the ZY-game closed form holds.
    pub fn is_real_nonnegative(&self) -> bool {
        [self.a, self.b, self.c]
            .iter()
            .all(|z| z.im.abs() <= 1e-12 && z.re >= -1e-12)
    }
}

/// Wₙ: `(|100> + √n e^{iγ}|010> + √(n+1) e^{iδ}|001>) / √(2(1+n))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WnParams {
    pub n: u64,
    pub gamma: f64,
    pub delta: f64,
}

impl WnParams {
    pub fn new(n: u64, gamma: f64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("W_n requires n >= 1".into()));
        }
        if !gamma.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidParameter("W_n phases must be finite".into()));
        }
        Ok(Self { n, gamma, delta })
    }

    /// The induced `(a, b, c)`.
    pub fn amplitudes(&self) -> WClassParams {
        let n = self.n as f64;
        let scale = 1.0 / (2.0 * (1.0 + n)).sqrt();
        WClassParams {
            a: Complex64::new(scale, 0.0),
            b: Complex64::from_polar(n.sqrt() * scale, self.gamma),
            c: Complex64::from_polar((n + 1.0).sqrt() * scale, self.delta),
        }
    }
}

pub fn ghz_class(params: GhzClassParams) -> Result<StateVector> {
    let theta = params.theta;
    if !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("theta = {theta}")));
    }
    let mut amps = vec![ZERO; 8];
    amps[0] = Complex64::new(theta.sin(), 0.0);
    amps[7] = Complex64::new(theta.cos(), 0.0);
    StateVector::new(amps)
}

pub fn w_class(params: WClassParams) -> Result<StateVector> {
    let mut amps = vec![ZERO; 8];
    for (index, amp) in W_INDICES.iter().zip([params.a, params.b, params.c]) {
        amps[*index] = amp;
    }
    StateVector::new(amps)
}

pub fn w_n(params: WnParams) -> Result<StateVector> {
    if params.n == 0 {
        return Err(Error::InvalidParameter("W_n requires n >= 1".into()));
    }
    w_class(params.amplitudes())
}

/// `(|000> + |111>)/√2`.
pub fn standard_ghz() -> StateVector {
    let mut amps = vec![ZERO; 8];
    amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    amps[7] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    StateVector::new(amps).expect("standard GHZ is normalized")
}

/// `(|100> + |010> + |001>)/√3`.
pub fn standard_w() -> StateVector {
    let t = 1.0 / 3f64.sqrt();
    w_class(WClassParams::real(t, t, t).expect("equal weights are normalized"))
        .expect("standard W is normalized")
}
