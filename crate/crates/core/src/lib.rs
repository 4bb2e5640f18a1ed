//! Binned quadrature-phase homodyne statistics for two-mode
//! photon-number-correlated states `sum_n c_n |n>|n>`, the Clauser-Horne,
//! spin and information-theoretic Bell functionals built from them, and a
//! search for the coefficients that maximize a violation.
//!
//! Modules, bottom up:
//!
//! - [`specfun`]: reciprocal Gamma, oscillator functions, `I_0`, half-range
//!   Hermite overlaps.
//! - [`states`]: correlated states and the circle/squeezed/two-pair families.
//! - [`engine`]: coupling table, closed-form binned probabilities, `E(psi)`,
//!   conditional information and the raw joint density.
//! - [`bell`]: the three functionals, angle search, sweeps and grids.
//! - [`optimizer`]: multi-restart simplex search over coefficient vectors.
//! - [`oracle`]: quadrature cross-checks of every closed form.
//! - [`cli`]: the `homodyne-bell` command line.

// `!(x > 0.0)` style checks are there to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bell;
pub mod cli;
pub mod engine;
pub mod optimizer;
pub mod oracle;
pub mod specfun;
pub mod states;

pub use bell::{maximize_over_angle, BellEvaluator, BellKind, BellResult};
pub use engine::{CouplingTable, JointProbabilities, LogBase};
pub use optimizer::{optimize_coefficients, OptimizationReport, OptimizerConfig};
pub use states::{CorrelatedState, StateSpec};
