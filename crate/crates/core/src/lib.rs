//! Memory effects in a two-level system coupled to a bosonic bath, probed
//! through conditional past-future correlations of three projective
//! measurements.
//!
//! - [`kernel`]: bath correlation functions.
//! - [`propagator`]: excited-state amplitude `G(t)`, the two-time object
//!   `G(t,τ)` and the time-local rates.
//! - [`cpf`]: exact conditional tables and closed-form correlations.
//! - [`channel`]: explicit state-vector simulation of the measurement
//!   sequence, used as an independent check.
//! - [`experiment`]: finite-count and visibility noise model.

pub mod channel;
pub mod cpf;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod propagator;

pub use cpf::{CpfResult, InitialState, MeasurementScheme, Outcome, ProbabilityTable};
pub use error::{Error, Result};
pub use kernel::BathKernel;
pub use propagator::{Dynamics, PropagatorGrid, PropagatorSample, TwoTimeGrid};
