//! Deterministic first-order ODE systems, their labeled equilibrium
//! equations, and the structural causal models induced at equilibrium, with
//! one shared notion of perfect intervention across all three levels.
//!
//! The pipeline:
//!
//! 1. [`parser`] / [`model`] — declare a system (or use a built-in: the
//!    predator-prey model, the damped mass-spring chain).
//! 2. [`system`] — executable dynamics with block-level parent sets and
//!    graphs; hard interventions zero out targeted dynamics and cut incoming
//!    edges, soft interventions add a restoring force.
//! 3. [`dynamics`] — adaptive Runge-Kutta integration, equilibrium detection,
//!    finite stability probing, Jacobian spectra.
//! 4. [`equilibrium`] — labeled equilibrium equations, intervention by label
//!    replacement, multistart Newton solving, solvability probing.
//! 5. [`scm`] — the induced structural causal model: per-label mechanisms
//!    solving each equation for its own block, closed-form when affine.
//! 6. [`verify`] — machine checks that interventions commute with every
//!    construction step, structurally (exact) and numerically (tolerance).
//!
//! Everything numeric is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases below fix the common double-precision
//! instantiation.

pub mod dynamics;
pub mod equilibrium;
pub mod expr;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod parser;
pub mod rng;
pub mod scalar;
pub mod scm;
pub mod system;
pub mod verify;

/// Double-precision aliases for the main pipeline types.
pub type Expr64 = expr::Expr<f64>;
pub type ModelSpec64 = model::ModelSpec<f64>;
pub type OdeSystem64 = system::OdeSystem<f64>;
pub type Intervention64 = system::Intervention<f64>;
pub type Lee64 = equilibrium::Lee<f64>;
pub type Scm64 = scm::Scm<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
