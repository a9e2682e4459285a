//! Numerical laboratory for the stochastic SIS epidemic SDE.
//!
//! * [`model`]: parameters, coefficient functions, transforms, thresholds and
//!   moment envelopes.
//! * [`noise`]: reproducible, coarsenable Wiener increments.
//! * [`schemes`]: Euler-Maruyama, Gray-Yang (logit EM) and the semi-discrete
//!   exponential scheme on the odds, plus the trajectory driver.
//! * [`analysis`]: strong-error/order studies, scheme differences, extinction
//!   exponents, moment checks, domain-violation census and timing.

pub mod analysis;
pub mod error;
pub mod format;
pub mod model;
pub mod noise;
pub mod schemes;
pub mod stats;

pub use analysis::{ConvergenceReport, ConvergenceSetup, Experiment, ReferenceMode};
pub use error::{Result, SisError};
pub use model::{ModelConfig, SisParams};
pub use noise::WienerGrid;
pub use schemes::{simulate, SchemeKind, Trajectory};
