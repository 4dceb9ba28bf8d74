//! Local energies, bond currents and their post-processing into profiles,
//! gradients and a single steady-state current.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcwf::StationaryEstimate;
use crate::model::{Model, Topology};
use crate::scalar::Real;
use crate::sparse::CsrOperator;

/// Bonds deviating from the weighted mean current by more than this many
/// combined standard errors mark the estimate as non-uniform.
pub const UNIFORMITY_SIGMAS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("need at least 5 sites for an interior gradient with an error, got {0}")]
    TooFewSites(usize),
    #[error("expected {expected} estimates, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no bond currents to average")]
    NoBonds,
    #[error("need at least 2 realizations for an ensemble error, got {0}")]
    TooFewRealizations(usize),
}

/// Local energy operators (one per subunit) followed by bond currents.
#[derive(Debug, Clone)]
pub struct ObservableSet<T> {
    pub topology: Topology,
    pub site_energies: Vec<CsrOperator<T>>,
    pub bond_currents: Vec<CsrOperator<T>>,
}

impl<T: Real> ObservableSet<T> {
    /// Local energies exclude the interaction terms; ladder rungs include `J'`.
    pub fn from_model(model: &Model<T>) -> Self {
        Self {
            topology: model.spec.topology,
            site_energies: model.local.clone(),
            bond_currents: model.currents.clone(),
        }
    }

    /// Operators in the order `site_energies ++ bond_currents`.
    pub fn operators(&self) -> Vec<CsrOperator<T>> {
        self.site_energies
            .iter()
            .chain(&self.bond_currents)
            .cloned()
            .collect()
    }

    pub fn n_sites(&self) -> usize {
        self.site_energies.len()
    }

    /// Splits estimates returned for [`Self::operators`] into a profile.
    pub fn profile(
        &self,
        estimates: &[StationaryEstimate],
    ) -> Result<ProfileEstimate, ObservableError> {
        let n = self.site_energies.len();
        let expected = n + self.bond_currents.len();
        if estimates.len() != expected {
            return Err(ObservableError::LengthMismatch {
                expected,
                got: estimates.len(),
            });
        }
        Ok(ProfileEstimate {
            site_energies: local_energy_profile(&estimates[..n]),
            bond_currents: estimates[n..]
                .iter()
                .enumerate()
                .map(|(i, e)| Measured {
                    index: i + 1,
                    mean: e.mean,
                    std_error: e.std_error,
                })
                .collect(),
        })
    }
}

/// A mean with its standard error, tagged with a 1-based site or bond index.
///
/// Bond `mu` joins sites `mu` and `mu + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub index: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEstimate {
    pub site_energies: Vec<Measured>,
    pub bond_currents: Vec<Measured>,
}

pub fn local_energy_profile(estimates: &[StationaryEstimate]) -> Vec<Measured> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, e)| Measured {
            index: i + 1,
            mean: e.mean,
            std_error: e.std_error,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_pairs: usize,
}

/// Mean of `h(mu+1) - h(mu)` over interior pairs, dropping the first and last pair.
///
/// The error is the standard error of the mean of the pair differences.
pub fn mean_gradient(profile: &ProfileEstimate) -> Result<GradientEstimate, ObservableError> {
    let h = &profile.site_energies;
    let n = h.len();
    if n < 5 {
        return Err(ObservableError::TooFewSites(n));
    }
    let diffs: Vec<f64> = (1..n - 2).map(|i| h[i + 1].mean - h[i].mean).collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(GradientEstimate {
        mean,
        std_error: (var / k).sqrt(),
        n_pairs: diffs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Largest `|J_bond - mean| / sqrt(err_bond^2 + err_mean^2)`.
    pub max_deviation_sigmas: f64,
    /// False when a bond deviates by more than [`UNIFORMITY_SIGMAS`], which
    /// usually means the burn-in was too short.
    pub uniform: bool,
}

/// Inverse-variance weighted mean of the bond currents, treating the bond
/// estimates as independent.
///
/// Bonds with zero error (exact inputs) fall back to an unweighted mean.
/// For ensemble data prefer [`steady_current_from_realizations`].
pub fn steady_current(bonds: &[Measured]) -> Result<CurrentEstimate, ObservableError> {
    if bonds.is_empty() {
        return Err(ObservableError::NoBonds);
    }
    let weighted = bonds
        .iter()
        .all(|b| b.std_error > 0.0 && b.std_error.is_finite());
    let (mean, std_error) = if weighted {
        let w: Vec<f64> = bonds.iter().map(|b| b.std_error.powi(-2)).collect();
        let sw: f64 = w.iter().sum();
        let m = bonds.iter().zip(&w).map(|(b, w)| b.mean * w).sum::<f64>() / sw;
        (m, sw.sqrt().recip())
    } else {
        let m = bonds.iter().map(|b| b.mean).sum::<f64>() / bonds.len() as f64;
        (m, 0.0)
    };
    let max_deviation_sigmas = bonds
        .iter()
        .map(|b| {
            let d = (b.mean - mean).abs();
            let s = (b.std_error.powi(2) + std_error.powi(2)).sqrt();
            if s > 0.0 {
                d / s
            } else if d <= 1e-12 * mean.abs().max(1e-300) {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(CurrentEstimate {
        mean,
        std_error,
        max_deviation_sigmas,
        uniform: max_deviation_sigmas <= UNIFORMITY_SIGMAS,
    })
}

/// Weighted mean current with its error taken across realizations.
///
/// `per_realization[r][b]` is the time-averaged current of bond `b` in
/// realization `r`. The weights come from the bond errors as in
/// [`steady_current`], but the bonds of one trajectory are strongly
/// correlated, so the weighted mean is formed per realization first and its
/// spread gives the error. The uniformity test uses the per-realization
/// deviations of each bond from that mean in the same way.
pub fn steady_current_from_realizations(
    bonds: &[Measured],
    per_realization: &[Vec<f64>],
) -> Result<CurrentEstimate, ObservableError> {
    if bonds.is_empty() {
        return Err(ObservableError::NoBonds);
    }
    if let Some(row) = per_realization.iter().find(|r| r.len() != bonds.len()) {
        return Err(ObservableError::LengthMismatch {
            expected: bonds.len(),
            got: row.len(),
        });
    }
    let r = per_realization.len();
    if r < 2 {
        return Err(ObservableError::TooFewRealizations(r));
    }
    let weighted = bonds
        .iter()
        .all(|b| b.std_error > 0.0 && b.std_error.is_finite());
    let mut w: Vec<f64> = if weighted {
        bonds.iter().map(|b| b.std_error.powi(-2)).collect()
    } else {
        vec![1.0; bonds.len()]
    };
    let sw: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sw);

    let sem = |values: &[f64]| -> (f64, f64) {
        let m = values.iter().sum::<f64>() / r as f64;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1) as f64;
        (m, (var / r as f64).sqrt())
    };
    let combined: Vec<f64> = per_realization
        .iter()
        .map(|row| row.iter().zip(&w).map(|(j, w)| j * w).sum())
        .collect();
    let (mean, std_error) = sem(&combined);
    let max_deviation_sigmas = (0..bonds.len())
        .map(|b| {
            let d: Vec<f64> = per_realization
                .iter()
                .zip(&combined)
                .map(|(row, c)| row[b] - c)
                .collect();
            let (m, e) = sem(&d);
            if e > 0.0 {
                m.abs() / e
            } else if m.abs() <= 1e-12 * mean.abs().max(1e-300) {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(CurrentEstimate {
        mean,
        std_error,
        max_deviation_sigmas,
        uniform: max_deviation_sigmas <= UNIFORMITY_SIGMAS,
    })
}

/// Writes `size,site,mean,std_error` rows.
pub fn write_site_csv<W: Write>(
    w: &mut W,
    size: usize,
    sites: &[Measured],
    header: bool,
) -> io::Result<()> {
    if header {
        writeln!(w, "size,site,mean,std_error")?;
    }
    for s in sites {
        writeln!(w, "{size},{},{:.15e},{:.15e}", s.index, s.mean, s.std_error)?;
    }
    Ok(())
}

/// Writes `size,bond,mean,std_error` rows; bond `mu` joins `mu` and `mu + 1`.
pub fn write_bond_csv<W: Write>(
    w: &mut W,
    size: usize,
    bonds: &[Measured],
    header: bool,
) -> io::Result<()> {
    if header {
        writeln!(w, "size,bond,mean,std_error")?;
    }
    for b in bonds {
        writeln!(w, "{size},{},{:.15e},{:.15e}", b.index, b.mean, b.std_error)?;
    }
    Ok(())
}
