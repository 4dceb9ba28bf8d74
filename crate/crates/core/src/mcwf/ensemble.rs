use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{McwfError, Simulation, TrajectoryConfig, TrajectoryResult, TrajectorySeed};
use crate::model::SystemSpec;
use crate::scalar::Real;
use crate::sparse::CsrOperator;

/// Stationary expectation value with its statistical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_realizations: usize,
    /// Samples averaged per realization.
    pub n_samples: usize,
}

impl StationaryEstimate {
    /// Mean of per-realization averages and `sigma^2 = sum (A_r - mean)^2 / (R (R - 1))`.
    pub fn from_realizations(values: &[f64], n_samples: usize) -> Self {
        let r = values.len();
        let mean = values.iter().sum::<f64>() / r as f64;
        let std_error = if r >= 2 {
            let ss: f64 = values.iter().map(|a| (a - mean).powi(2)).sum();
            (ss / (r * (r - 1)) as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_error,
            n_realizations: r,
            n_samples,
        }
    }

    /// `(self - reference) / std_error`; zero error gives 0 or infinity.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub estimates: Vec<StationaryEstimate>,
    pub jump_rate: StationaryEstimate,
    pub trajectories: Vec<TrajectoryResult>,
}

impl EnsembleResult {
    fn from_trajectories(trajectories: Vec<TrajectoryResult>) -> Self {
        let n_obs = trajectories.first().map_or(0, |t| t.means.len());
        let n_samples = trajectories.first().map_or(0, |t| t.n_samples);
        let estimates = (0..n_obs)
            .map(|i| {
                let values: Vec<f64> = trajectories.iter().map(|t| t.means[i]).collect();
                StationaryEstimate::from_realizations(&values, n_samples)
            })
            .collect();
        let rates: Vec<f64> = trajectories.iter().map(|t| t.jump_rate()).collect();
        let jump_rate = StationaryEstimate::from_realizations(&rates, n_samples);
        Self {
            estimates,
            jump_rate,
            trajectories,
        }
    }
}

/// Realization `r` of master seed `s` uses ChaCha stream `r` of seed `s`.
pub fn realization_seeds(master_seed: u64, realizations: usize) -> Vec<TrajectorySeed> {
    (0..realizations as u64)
        .map(|r| TrajectorySeed::new(master_seed, r))
        .collect()
}

impl<T: Real> Simulation<T> {
    /// Runs `realizations` independent trajectories in parallel, seeded from the config seed.
    pub fn run_ensemble(
        &self,
        observables: &[CsrOperator<T>],
        realizations: usize,
    ) -> Result<EnsembleResult, McwfError> {
        if realizations < 2 {
            return Err(McwfError::InvalidConfig(format!(
                "an ensemble needs at least 2 realizations, got {realizations}"
            )));
        }
        self.run_ensemble_with_seeds(
            observables,
            &realization_seeds(self.config().seed, realizations),
        )
    }

    /// Results are merged in seed order, so output does not depend on thread count.
    pub fn run_ensemble_with_seeds(
        &self,
        observables: &[CsrOperator<T>],
        seeds: &[TrajectorySeed],
    ) -> Result<EnsembleResult, McwfError> {
        let trajectories = seeds
            .par_iter()
            .map(|&seed| self.run_trajectory(seed, observables))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EnsembleResult::from_trajectories(trajectories))
    }
}

/// Single-realization time averages with batch-means errors.
pub fn run_trajectory<T: Real>(
    spec: &SystemSpec,
    config: &TrajectoryConfig,
    observables: &[CsrOperator<T>],
) -> Result<Vec<StationaryEstimate>, McwfError> {
    let sim = Simulation::<T>::new(spec, config)?;
    let res = sim.run_trajectory(TrajectorySeed::new(config.seed, 0), observables)?;
    Ok(res
        .means
        .iter()
        .zip(&res.batch_errors)
        .map(|(&mean, &std_error)| StationaryEstimate {
            mean,
            std_error,
            n_realizations: 1,
            n_samples: res.n_samples,
        })
        .collect())
}

pub fn run_ensemble<T: Real>(
    spec: &SystemSpec,
    config: &TrajectoryConfig,
    observables: &[CsrOperator<T>],
    realizations: usize,
) -> Result<Vec<StationaryEstimate>, McwfError> {
    let sim = Simulation::<T>::new(spec, config)?;
    Ok(sim.run_ensemble(observables, realizations)?.estimates)
}
