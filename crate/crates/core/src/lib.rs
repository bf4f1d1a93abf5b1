//! Exact simulation of three-qubit Vaidman-type games, their entanglement
//! measures, and GHZ/W-state secret sharing with a message-level transport.

pub mod entanglement;
pub mod error;
pub mod games;
mod linalg;
pub mod protocols;
pub mod qcore;
pub mod states;
pub mod transport;

pub use error::{Error, Result};
pub use qcore::{DensityMatrix, MeasurementBasis, Outcome, StateVector};
