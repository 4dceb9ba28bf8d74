//! Boundary-driven transport in weakly coupled spin-1/2 chains and ladders.
//!
//! Two heat baths at different temperatures act on the edge spins through a
//! Lindblad master equation. The nonequilibrium steady state is sampled with
//! quantum-jump trajectories ([`mcwf`]) and cross-checked against an exact
//! Liouvillian null-space solver for small systems ([`oracle`]). Energy
//! profiles and currents ([`observables`]) feed finite-size scaling fits that
//! classify transport as ballistic or diffusive ([`analysis`]).
//!
//! Numerics are generic over the [`Real`] scalar; the aliases below fix the
//! double-precision types used by the oracle, analysis and campaign layers.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baths;
pub mod campaign;
pub mod mcwf;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod scalar;
pub mod sparse;

pub use scalar::{Cplx, Real};

/// Sparse operator on the full Hilbert space, double precision.
pub type SparseOperator = sparse::CsrOperator<f64>;
pub type JumpChannel = baths::JumpChannel<f64>;
pub type StateVector = mcwf::StateVector<f64>;
pub type Model = model::Model<f64>;
pub type Simulation = mcwf::Simulation<f64>;
