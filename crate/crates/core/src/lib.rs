//! Distributionally robust power allocation for interference-free
//! multi-terminal fading channels.
//!
//! Total power is regulated through a CVaR constraint, the worst-case
//! expectation over a density-ratio ambiguity ball around the fading law.
//! The math modules are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the scenario and
//! experiment layers use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cvar;
pub mod error;
pub mod experiment;
pub mod fading;
pub mod oracle;
pub mod policy;
pub mod quadrature;
pub mod radius;
pub mod scalar;
pub mod scenario;
pub mod solver;
pub mod stats;
pub mod utility;
pub mod var_levels;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FadingModel64 = fading::FadingModel<f64>;
pub type SampleBatch64 = cvar::SampleBatch<f64>;
pub type TerminalConfig64 = policy::TerminalConfig<f64>;
pub type DualState64 = policy::DualState<f64>;
pub type VarLevels64 = var_levels::VarLevels<f64>;
pub type LevelParams64 = var_levels::LevelParams<f64>;
pub type UtilityKind64 = utility::UtilityKind<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type IterationRecord64 = solver::IterationRecord<f64>;
pub type Trajectory64 = solver::Trajectory<f64>;

pub type FadingModel32 = fading::FadingModel<f32>;
pub type TerminalConfig32 = policy::TerminalConfig<f32>;
pub type SolverConfig32 = solver::SolverConfig<f32>;
