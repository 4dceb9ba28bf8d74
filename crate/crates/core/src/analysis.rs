//! Finite-size scaling of currents and gradients against `1/N`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observables::{Measured, ProfileEstimate};
use crate::scalar::Real;

/// Default significance threshold, in standard errors, for classification.
pub const DEFAULT_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("a weighted fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point {0} has a non-positive or non-finite error")]
    BadError(usize),
    #[error("all abscissae are equal; the fit is singular")]
    SingularDesign,
    #[error("need at least 3 sizes in the fit range, got {0}")]
    InsufficientSizes(usize),
    #[error("gradient slope {slope:e} is consistent with zero (error {error:e}); conductivity undefined")]
    UndefinedConductivity { slope: f64, error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint<T = f64> {
    pub x: T,
    pub y: T,
    pub y_error: T,
}

/// `y = intercept + slope * x` with errors from the unscaled covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T = f64> {
    pub slope: T,
    pub slope_error: T,
    pub intercept: T,
    pub intercept_error: T,
    /// Covariance of slope and intercept.
    pub covariance: T,
    pub chi2_per_dof: T,
    pub dof: usize,
}

impl<T: Real> FitResult<T> {
    pub fn eval(&self, x: T) -> T {
        self.intercept + self.slope * x
    }
}

/// Inverse-variance weighted least squares for a straight line.
pub fn weighted_linear_fit<T: Real>(points: &[FitPoint<T>]) -> Result<FitResult<T>, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.y_error > T::zero() && p.y_error.is_finite()) {
            return Err(AnalysisError::BadError(i));
        }
    }
    let w: Vec<T> = points
        .iter()
        .map(|p| (p.y_error * p.y_error).recip())
        .collect();
    let sw: T = w.iter().copied().sum();
    let xm = points.iter().zip(&w).map(|(p, &w)| w * p.x).sum::<T>() / sw;
    let ym = points.iter().zip(&w).map(|(p, &w)| w * p.y).sum::<T>() / sw;
    // centered sums keep the normal equations well conditioned
    let sxx: T = points
        .iter()
        .zip(&w)
        .map(|(p, &w)| w * (p.x - xm) * (p.x - xm))
        .sum();
    let sxy: T = points
        .iter()
        .zip(&w)
        .map(|(p, &w)| w * (p.x - xm) * (p.y - ym))
        .sum();
    let span = points
        .iter()
        .map(|p| (p.x - xm).abs())
        .fold(T::zero(), T::max);
    if sxx <= T::zero() || span <= T::epsilon() * xm.abs().max(T::one()) {
        return Err(AnalysisError::SingularDesign);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let var_slope = sxx.recip();
    let var_intercept = sw.recip() + xm * xm / sxx;
    let covariance = -xm / sxx;
    let chi2: T = points
        .iter()
        .zip(&w)
        .map(|(p, &w)| {
            let r = p.y - intercept - slope * p.x;
            w * r * r
        })
        .sum();
    let dof = points.len() - 2;
    Ok(FitResult {
        slope,
        slope_error: var_slope.sqrt(),
        intercept,
        intercept_error: var_intercept.sqrt(),
        covariance,
        chi2_per_dof: chi2 / T::lit(dof as f64),
        dof,
    })
}

/// Interior gradient from an ordinary least-squares line through sites
/// `2..N-1`, with the error scaled by the residual spread.
///
/// Suited to profiles with a site-to-site modulation, where pair differences
/// alternate in sign.
pub fn fit_gradient(profile: &ProfileEstimate) -> Result<Measured, AnalysisError> {
    let h = &profile.site_energies;
    if h.len() < 5 {
        return Err(AnalysisError::TooFewPoints {
            needed: 5,
            got: h.len(),
        });
    }
    let interior = &h[1..h.len() - 1];
    let n = interior.len() as f64;
    let xm = interior.iter().map(|s| s.index as f64).sum::<f64>() / n;
    let ym = interior.iter().map(|s| s.mean).sum::<f64>() / n;
    let sxx: f64 = interior.iter().map(|s| (s.index as f64 - xm).powi(2)).sum();
    let sxy: f64 = interior
        .iter()
        .map(|s| (s.index as f64 - xm) * (s.mean - ym))
        .sum();
    let slope = sxy / sxx;
    let rss: f64 = interior
        .iter()
        .map(|s| (s.mean - ym - slope * (s.index as f64 - xm)).powi(2))
        .sum();
    let std_error = (rss / (n - 2.0) / sxx).sqrt();
    Ok(Measured {
        index: 0,
        mean: slope,
        std_error,
    })
}

/// Aggregated steady state of one system size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    /// Sites for a chain, rungs for a ladder.
    pub size: usize,
    pub current: f64,
    pub current_error: f64,
    /// Missing for sizes too small to define an interior gradient.
    pub gradient: Option<f64>,
    pub gradient_error: Option<f64>,
}

/// Inclusive size window applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SizeRange {
    pub min: Option<usize>,
    pub max: Option<usize>,
}

impl SizeRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self {
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn contains(&self, n: usize) -> bool {
        self.min.is_none_or(|m| n >= m) && self.max.is_none_or(|m| n <= m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueWithError {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub sizes: Vec<usize>,
    pub current_fit: FitResult,
    /// Infinite-size current, the intercept at `1/N = 0`.
    pub current_infinite: ValueWithError,
    pub gradient_fit: Option<FitResult>,
    pub gradient_infinite: Option<ValueWithError>,
}

pub fn current_points(records: &[ScalingRecord]) -> Vec<FitPoint> {
    records
        .iter()
        .map(|r| FitPoint {
            x: 1.0 / r.size as f64,
            y: r.current,
            y_error: r.current_error,
        })
        .collect()
}

pub fn gradient_points(records: &[ScalingRecord]) -> Vec<FitPoint> {
    records
        .iter()
        .filter_map(|r| match (r.gradient, r.gradient_error) {
            (Some(y), Some(e)) => Some(FitPoint {
                x: 1.0 / r.size as f64,
                y,
                y_error: e,
            }),
            _ => None,
        })
        .collect()
}

/// Fits current and gradient against `1/N` over the sizes in `range`.
///
/// The gradient fit is omitted when fewer than three sizes carry a gradient.
pub fn extrapolate_infinite(
    records: &[ScalingRecord],
    range: SizeRange,
) -> Result<Extrapolation, AnalysisError> {
    let mut kept: Vec<ScalingRecord> = records
        .iter()
        .filter(|r| range.contains(r.size))
        .copied()
        .collect();
    kept.sort_by_key(|r| r.size);
    let mut sizes: Vec<usize> = kept.iter().map(|r| r.size).collect();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(AnalysisError::InsufficientSizes(sizes.len()));
    }
    let current_fit = weighted_linear_fit(&current_points(&kept))?;
    let grad = gradient_points(&kept);
    let gradient_fit = if grad.len() >= 3 {
        Some(weighted_linear_fit(&grad)?)
    } else {
        None
    };
    Ok(Extrapolation {
        sizes,
        current_infinite: ValueWithError {
            value: current_fit.intercept,
            error: current_fit.intercept_error,
        },
        gradient_infinite: gradient_fit.map(|f| ValueWithError {
            value: f.intercept,
            error: f.intercept_error,
        }),
        current_fit,
        gradient_fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductivity {
    pub kappa: f64,
    pub error: f64,
    /// The current intercept is significantly nonzero, so the ratio is not a
    /// bulk conductivity.
    pub ballistic_warning: bool,
}

/// `kappa = slope_J / slope_gradient` with first-order error propagation.
///
/// Currents are positive when flowing toward lower site index and gradients
/// are `h(mu+1) - h(mu)`, so diffusive transport gives `kappa > 0`.
pub fn conductivity_infinite(
    current_fit: &FitResult,
    gradient_fit: &FitResult,
    sigmas: f64,
) -> Result<Conductivity, AnalysisError> {
    let (sj, ej) = (current_fit.slope, current_fit.slope_error);
    let (sg, eg) = (gradient_fit.slope, gradient_fit.slope_error);
    if !(sg.abs() > eg) {
        return Err(AnalysisError::UndefinedConductivity {
            slope: sg,
            error: eg,
        });
    }
    let kappa = sj / sg;
    let error = ((ej / sg).powi(2) + (sj * eg / (sg * sg)).powi(2)).sqrt();
    let ballistic_warning = current_fit.intercept.abs() > sigmas * current_fit.intercept_error;
    Ok(Conductivity {
        kappa,
        error,
        ballistic_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transport {
    Ballistic,
    Diffusive,
    Inconclusive,
}

/// Ballistic if `J_inf > k sigma`; diffusive if `|J_inf| <= k sigma` and the
/// gradient slope is significant at the same level; otherwise inconclusive.
pub fn classify_transport(ex: &Extrapolation, sigmas: f64) -> Transport {
    let j = ex.current_infinite;
    if j.value > sigmas * j.error {
        return Transport::Ballistic;
    }
    let gradient_significant = ex
        .gradient_fit
        .is_some_and(|g| g.slope.abs() > sigmas * g.slope_error);
    if j.value.abs() <= sigmas * j.error && gradient_significant {
        Transport::Diffusive
    } else {
        Transport::Inconclusive
    }
}

/// Everything derived from one scan, as written to `analysis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub range: SizeRange,
    pub sigmas: f64,
    pub extrapolation: Extrapolation,
    pub classification: Transport,
    pub conductivity: Option<Conductivity>,
    /// Why `conductivity` is absent, if it is.
    pub conductivity_note: Option<String>,
}

pub fn summarize(
    records: &[ScalingRecord],
    range: SizeRange,
    sigmas: f64,
) -> Result<AnalysisSummary, AnalysisError> {
    let extrapolation = extrapolate_infinite(records, range)?;
    let classification = classify_transport(&extrapolation, sigmas);
    let (conductivity, conductivity_note) = match &extrapolation.gradient_fit {
        None => (None, Some("fewer than 3 sizes with a gradient".to_string())),
        Some(g) => match conductivity_infinite(&extrapolation.current_fit, g, sigmas) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    Ok(AnalysisSummary {
        range,
        sigmas,
        extrapolation,
        classification,
        conductivity,
        conductivity_note,
    })
}

/// Writes `x,y,y_error,fit_y` rows for plotting a fit against its data.
pub fn write_fit_csv<W: Write>(
    w: &mut W,
    points: &[FitPoint],
    fit: Option<&FitResult>,
) -> io::Result<()> {
    writeln!(w, "x,y,y_error,fit_y")?;
    for p in points {
        let fy = fit.map_or(f64::NAN, |f| f.eval(p.x));
        writeln!(
            w,
            "{:.15e},{:.15e},{:.15e},{:.15e}",
            p.x, p.y, p.y_error, fy
        )?;
    }
    Ok(())
}
