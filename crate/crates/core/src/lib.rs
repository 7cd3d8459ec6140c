//! Optimal control of driven two-level open quantum systems.
//!
//! Bloch-form Lindblad dynamics in the frame co-moving with the Hamiltonian
//! eigenbasis, the Pontryagin conditions for heat and time minimization,
//! closed-form extremal protocols, and a brute-force optimizer used to
//! cross-check them.

pub mod analytic;
pub mod bloch;
pub mod dissipators;
pub mod dynamics;
pub mod error;
pub mod frame;
mod numerics;
pub mod optimizer;
pub mod pmp;

pub use bloch::{BlochState, CostateBloch, QubitOperator, Vec3};
pub use dissipators::{DissipatorKind, DissipatorModel};
pub use dynamics::{ControlSchedule, Objective, Quench, Trajectory};
pub use error::{Error, Result};
pub use frame::{Interpolation, LambdaCoefficients, LambdaSchedule};
pub use pmp::{PmpReport, Residual, Tolerances};
