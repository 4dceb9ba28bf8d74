//! Monte Carlo wave-function (quantum jump) unraveling of the master equation.
//!
//! A trajectory evolves an unnormalized state under the non-Hermitian
//! effective Hamiltonian until its squared norm decays to a uniform random
//! threshold, then applies a jump chosen with probability proportional to
//! `alpha_k |E_k psi|^2`. Observables are normalized when sampled. Stationary
//! values come from time averages over one trajectory and from the spread of
//! those averages across independent realizations.

mod ensemble;
mod jump;
mod propagator;
mod trajectory;

pub use ensemble::{
    realization_seeds, run_ensemble, run_trajectory, EnsembleResult, StationaryEstimate,
};
pub use jump::{apply_jump, select_jump};
pub use propagator::{effective_hamiltonian, Propagator, Segment, Workspace};
pub use trajectory::{JumpEvent, Simulation, TrajectoryResult, TrajectorySeed};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baths::BathError;
use crate::model::ModelError;
use crate::scalar::{norm_sqr, Cplx, Real};
use crate::sparse::{CsrOperator, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McwfError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("squared norm increased from {before} to {after} within one step; substep too large?")]
    NormIncrease { before: f64, after: f64 },
    #[error("no jump channel has nonzero weight (dark state)")]
    DarkState,
    #[error("jump operator annihilates the state")]
    InvalidJump,
    #[error("invalid trajectory configuration: {0}")]
    InvalidConfig(String),
    #[error("observable {0} is not Hermitian")]
    NonHermitianObservable(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// How jump times are determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpMode {
    /// Integrate until the squared norm reaches a uniform random threshold.
    #[default]
    NormThreshold,
    /// Jumps only at multiples of `dt_sample` with first-order probabilities.
    FixedStepFirstOrder,
}

/// Deterministic integrator for the no-jump evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Symmetric splitting: exact exponential of the diagonal of `H_eff`
    /// around a Taylor-series exponential of its off-diagonal part.
    #[default]
    SplitDiagonal,
    /// Classical fourth-order Runge-Kutta on the full `H_eff`.
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Every spin in `(|up> + |down>) / sqrt(2)`.
    #[default]
    UniformSuperposition,
    /// A computational basis state by index.
    Basis(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Sampling interval.
    pub dt_sample: f64,
    /// Burn-in time discarded before the first sample.
    pub t0: f64,
    /// Number of sampling intervals; `t_total + 1` samples are averaged.
    pub t_total: usize,
    /// Largest internal integration step.
    pub substep: f64,
    pub seed: u64,
    pub jump_mode: JumpMode,
    pub integrator: Integrator,
    pub initial_state: InitialState,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            dt_sample: 1.0,
            t0: 1.0e4,
            t_total: 100_000,
            substep: 0.5,
            seed: 1,
            jump_mode: JumpMode::NormThreshold,
            integrator: Integrator::SplitDiagonal,
            initial_state: InitialState::UniformSuperposition,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<(), McwfError> {
        let bad = |m: String| Err(McwfError::InvalidConfig(m));
        if !(self.dt_sample > 0.0 && self.dt_sample.is_finite()) {
            return bad(format!("dt_sample must be > 0, got {}", self.dt_sample));
        }
        if !(self.substep > 0.0 && self.substep <= self.dt_sample) {
            return bad(format!(
                "substep must lie in (0, dt_sample = {}], got {}",
                self.dt_sample, self.substep
            ));
        }
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return bad(format!("t0 must be >= 0, got {}", self.t0));
        }
        if self.t_total < 1 {
            return bad("t_total must be >= 1".into());
        }
        Ok(())
    }
}

/// Pure state with its cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    amplitudes: Vec<Cplx<T>>,
    squared_norm: T,
}

impl<T: Real> StateVector<T> {
    pub fn new(amplitudes: Vec<Cplx<T>>) -> Self {
        let squared_norm = norm_sqr(&amplitudes);
        Self {
            amplitudes,
            squared_norm,
        }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![Cplx::new(T::zero(), T::zero()); dim];
        amplitudes[index] = Cplx::new(T::one(), T::zero());
        Self {
            amplitudes,
            squared_norm: T::one(),
        }
    }

    /// Product state with every spin in `(|up> + |down>) / sqrt(2)`.
    pub fn uniform_superposition(dim: usize) -> Self {
        let a = T::one() / T::lit(dim as f64).sqrt();
        Self::new(vec![Cplx::new(a, T::zero()); dim])
    }

    pub fn from_initial(dim: usize, init: &InitialState) -> Result<Self, McwfError> {
        match *init {
            InitialState::UniformSuperposition => Ok(Self::uniform_superposition(dim)),
            InitialState::Basis(i) if i < dim => Ok(Self::basis(dim, i)),
            InitialState::Basis(i) => Err(McwfError::InvalidConfig(format!(
                "basis index {i} outside dimension {dim}"
            ))),
        }
    }

    pub fn amplitudes(&self) -> &[Cplx<T>] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn squared_norm(&self) -> T {
        self.squared_norm
    }

    /// Recomputes the cached norm from the amplitudes.
    pub fn resync(&mut self) {
        self.squared_norm = norm_sqr(&self.amplitudes);
    }

    pub fn normalize(&mut self) {
        let n = norm_sqr(&self.amplitudes);
        let inv = T::one() / n.sqrt();
        for a in &mut self.amplitudes {
            *a = *a * inv;
        }
        self.squared_norm = T::one();
    }

    /// `<psi|A|psi> / <psi|psi>` (real part).
    pub fn expectation(&self, op: &CsrOperator<T>) -> T {
        op.expectation(&self.amplitudes).re / self.squared_norm
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<Cplx<T>>, &mut T) {
        (&mut self.amplitudes, &mut self.squared_norm)
    }
}
