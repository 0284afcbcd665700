//! Constant-modulus MIMO-OFDM dual-function waveform synthesis.
//!
//! Waveforms live on a `n_sym x n_sc x n_tx` grid. The solver minimizes the
//! integrated sidelobe level of the beam-projected range-Doppler ambiguity
//! function over the complex circle manifold, subject to a directional power
//! floor and per-user PSK safety-margin constraints, using an augmented
//! Lagrangian outer loop and Riemannian conjugate gradient inner loop.

pub mod ambiguity;
pub mod baselines;
pub mod comm;
pub mod config;
mod error;
pub mod eval;
pub mod manifold;
pub mod model;
pub mod numeric;
pub mod objective;
pub mod rng;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use model::{BlockDft, Dimensions, Domain, SteeringVector, WaveformGrid};
