use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_jump, effective_hamiltonian, select_jump, JumpMode, McwfError, Propagator, StateVector,
    TrajectoryConfig, Workspace,
};
use crate::baths::{build_channels, JumpChannel};
use crate::model::{Model, SystemSpec};
use crate::scalar::Real;
use crate::sparse::CsrOperator;

/// Number of contiguous batches used for the single-trajectory error estimate.
pub const BATCHES: usize = 32;

/// Seed plus independent ChaCha stream for one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub seed: u64,
    pub stream: u64,
}

impl TrajectorySeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One quantum jump, for debugging logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
}

impl JumpEvent {
    /// Line-delimited JSON record.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Time averages of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub seed: TrajectorySeed,
    /// Time average of each observable over the `t_total + 1` samples.
    pub means: Vec<f64>,
    /// Batch-means standard error of each time average.
    pub batch_errors: Vec<f64>,
    pub n_samples: usize,
    /// Jumps in `(t0, t0 + t_total * dt_sample]`.
    pub jumps_in_window: usize,
    pub window: f64,
}

impl TrajectoryResult {
    pub fn jump_rate(&self) -> f64 {
        self.jumps_in_window as f64 / self.window
    }
}

/// Prepared operators and propagator for repeated trajectories of one model.
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    pub hamiltonian: CsrOperator<T>,
    pub channels: Vec<JumpChannel<T>>,
    propagator: Propagator<T>,
    config: TrajectoryConfig,
}

impl<T: Real> Simulation<T> {
    pub fn new(spec: &SystemSpec, config: &TrajectoryConfig) -> Result<Self, McwfError> {
        let model = Model::assemble(spec)?;
        let channels = build_channels(spec)?;
        Self::from_parts(model.hamiltonian, channels, config)
    }

    /// Any Hamiltonian with any set of channels, e.g. a bare spin with one bath.
    pub fn from_parts(
        hamiltonian: CsrOperator<T>,
        channels: Vec<JumpChannel<T>>,
        config: &TrajectoryConfig,
    ) -> Result<Self, McwfError> {
        config.validate()?;
        let h_eff = effective_hamiltonian(&hamiltonian, &channels)?;
        let propagator = Propagator::new(h_eff, config.integrator, config.substep)?;
        Ok(Self {
            hamiltonian,
            channels,
            propagator,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.config
    }

    pub fn propagator(&self) -> &Propagator<T> {
        &self.propagator
    }

    pub fn dim(&self) -> usize {
        self.propagator.dim()
    }

    /// Runs one realization and returns time averages of `observables`.
    pub fn run_trajectory(
        &self,
        seed: TrajectorySeed,
        observables: &[CsrOperator<T>],
    ) -> Result<TrajectoryResult, McwfError> {
        self.run_trajectory_logged(seed, observables, &mut |_| {})
    }

    pub fn run_trajectory_logged(
        &self,
        seed: TrajectorySeed,
        observables: &[CsrOperator<T>],
        log: &mut dyn FnMut(JumpEvent),
    ) -> Result<TrajectoryResult, McwfError> {
        check_observables(observables, self.dim())?;
        let cfg = &self.config;
        let n_samples = cfg.t_total + 1;
        let batches = BATCHES.min(n_samples);
        let n_obs = observables.len();
        let mut sums = vec![0.0f64; n_obs];
        let mut batch_sums = vec![0.0f64; n_obs * batches];
        let mut batch_counts = vec![0usize; batches];
        let window_start = cfg.t0;
        let mut jumps_in_window = 0usize;

        self.drive(
            seed,
            n_samples,
            |k| cfg.t0 + k as f64 * cfg.dt_sample,
            |k, state| {
                let b = k * batches / n_samples;
                batch_counts[b] += 1;
                for (i, op) in observables.iter().enumerate() {
                    let v = state.expectation(op).as_f64();
                    sums[i] += v;
                    batch_sums[b * n_obs + i] += v;
                }
            },
            |event| {
                if event.time > window_start {
                    jumps_in_window += 1;
                }
                log(event);
            },
        )?;

        let means: Vec<f64> = sums.iter().map(|s| s / n_samples as f64).collect();
        let batch_errors = (0..n_obs)
            .map(|i| {
                if batches < 2 {
                    return f64::NAN;
                }
                let bm: Vec<f64> = (0..batches)
                    .map(|b| batch_sums[b * n_obs + i] / batch_counts[b] as f64)
                    .collect();
                let m = bm.iter().sum::<f64>() / batches as f64;
                let var = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
                (var / batches as f64).sqrt()
            })
            .collect();
        Ok(TrajectoryResult {
            seed,
            means,
            batch_errors,
            n_samples,
            jumps_in_window,
            window: cfg.t_total as f64 * cfg.dt_sample,
        })
    }

    /// Normalized trajectory states at the given increasing times, no averaging.
    pub fn sample_states(
        &self,
        seed: TrajectorySeed,
        times: &[f64],
    ) -> Result<Vec<StateVector<T>>, McwfError> {
        let mut out = Vec::with_capacity(times.len());
        self.drive(
            seed,
            times.len(),
            |k| times[k],
            |_, state| {
                let mut s = state.clone();
                s.normalize();
                out.push(s);
            },
            |_| {},
        )?;
        Ok(out)
    }

    fn drive(
        &self,
        seed: TrajectorySeed,
        n_stops: usize,
        stop_time: impl Fn(usize) -> f64,
        mut on_stop: impl FnMut(usize, &StateVector<T>),
        mut on_jump: impl FnMut(JumpEvent),
    ) -> Result<(), McwfError> {
        let mut rng = seed.rng();
        let mut state = StateVector::from_initial(self.dim(), &self.config.initial_state)?;
        state.normalize();
        let mut ws = Workspace::new(self.dim());
        let mut t = 0.0f64;
        match self.config.jump_mode {
            JumpMode::NormThreshold => {
                let mut eta = open_unit(&mut rng);
                for k in 0..n_stops {
                    let target = stop_time(k);
                    while target - t > 0.0 {
                        let seg = self.propagator.evolve_to_threshold(
                            &mut state,
                            T::lit(eta),
                            target - t,
                            &mut ws,
                        )?;
                        if !seg.hit {
                            t = target;
                            break;
                        }
                        t += seg.elapsed;
                        match select_jump(&state, &self.channels, rng.random::<f64>()) {
                            Ok(ch) => {
                                state = apply_jump(&state, &self.channels[ch])?;
                                on_jump(JumpEvent {
                                    time: t,
                                    channel: ch,
                                });
                            }
                            // No channel can fire: keep evolving deterministically.
                            Err(McwfError::DarkState) => state.normalize(),
                            Err(e) => return Err(e),
                        }
                        eta = open_unit(&mut rng);
                    }
                    on_stop(k, &state);
                }
            }
            JumpMode::FixedStepFirstOrder => {
                let dt = self.config.dt_sample;
                for k in 0..n_stops {
                    let target = stop_time(k);
                    while target - t > 1e-12 * dt {
                        let h = dt.min(target - t);
                        let before = state.clone();
                        self.propagator.propagate(&mut state, h, &mut ws)?;
                        let p_jump = 1.0 - state.squared_norm().as_f64();
                        t += h;
                        if rng.random::<f64>() < p_jump {
                            match select_jump(&before, &self.channels, rng.random::<f64>()) {
                                Ok(ch) => {
                                    state = apply_jump(&before, &self.channels[ch])?;
                                    on_jump(JumpEvent {
                                        time: t,
                                        channel: ch,
                                    });
                                }
                                Err(McwfError::DarkState) => state.normalize(),
                                Err(e) => return Err(e),
                            }
                        } else {
                            state.normalize();
                        }
                    }
                    t = t.max(target);
                    on_stop(k, &state);
                }
            }
        }
        Ok(())
    }
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn check_observables<T: Real>(observables: &[CsrOperator<T>], dim: usize) -> Result<(), McwfError> {
    for (i, op) in observables.iter().enumerate() {
        if op.dim() != dim {
            return Err(McwfError::DimensionMismatch {
                expected: dim,
                got: op.dim(),
            });
        }
        let scale = op.max_row_abs_sum().max(T::one());
        if !op.is_hermitian(T::lit(1e-10) * scale) {
            return Err(McwfError::NonHermitianObservable(i));
        }
    }
    Ok(())
}
