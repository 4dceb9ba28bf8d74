//! Parameter scans: run every scan point, persist results, fit, and verify
//! small systems against the exact solver.
//!
//! Bundle layout under the output directory:
//!
//! ```text
//! campaign.json             copy of the campaign
//! manifest.json             per-point status, seeds, spec hashes, wall times
//! points/<hash>.json        ensemble result of one scan point
//! points/<hash>_sites.csv   size,site,mean,std_error
//! points/<hash>_bonds.csv   size,bond,mean,std_error
//! analysis/<label>.json     fits, extrapolation, classification, conductivity
//! analysis/<label>_current.csv, analysis/<label>_gradient.csv   x,y,y_error,fit_y
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    current_points, gradient_points, summarize, write_fit_csv, AnalysisError, AnalysisSummary,
    ScalingRecord, SizeRange, DEFAULT_SIGMAS,
};
use crate::mcwf::{McwfError, Simulation, TrajectoryConfig};
use crate::model::{Model, ModelError, SystemSpec};
use crate::observables::{
    mean_gradient, steady_current_from_realizations, write_bond_csv, write_site_csv,
    CurrentEstimate, Measured, ObservableError, ObservableSet, ProfileEstimate,
};
use crate::oracle::{Fixture, OracleError, OracleLimits};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "BATHCHAIN_WORKERS";
/// Largest system accepted by [`verify`].
pub const VERIFY_MAX_SPINS: usize = 4;
/// `|z|` above this marks a verification mismatch.
pub const VERIFY_Z_LIMIT: f64 = 4.0;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mcwf(#[from] McwfError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl CampaignError {
    /// Validation problems as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Self::Invalid(_)
                | Self::Model(_)
                | Self::Json { .. }
                | Self::Mcwf(McwfError::InvalidConfig(_))
                | Self::Oracle(OracleError::TooLarge { .. } | OracleError::InvalidLimit(_))
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CampaignError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CampaignError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CampaignError> {
    let text = serde_json::to_string_pretty(value).expect("bundle types serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    Size,
    Delta,
    Epsilon,
    JPrime,
    Lambda,
}

impl ScanAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Size => "size",
            Self::Delta => "delta",
            Self::Epsilon => "epsilon",
            Self::JPrime => "j_prime",
            Self::Lambda => "lambda",
        }
    }

    fn apply(self, spec: &mut SystemSpec, value: f64) -> Result<(), CampaignError> {
        match self {
            Self::Size => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(CampaignError::Invalid(format!(
                        "size value {value} is not a positive integer"
                    )));
                }
                spec.n_sites = value as usize;
            }
            Self::Delta => spec.delta = value,
            Self::Epsilon => spec.epsilon = value,
            Self::JPrime => spec.j_prime = value,
            Self::Lambda => spec.lambda = value,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Least squares for modulated (alternating-field) chains, pair differences otherwise.
    #[default]
    Auto,
    /// Mean of interior nearest-neighbour differences.
    PairDifferences,
    /// Least-squares line through the interior sites.
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    pub base: SystemSpec,
    pub axis: ScanAxis,
    /// Strictly increasing.
    pub values: Vec<f64>,
    /// Sizes swept at every value of a non-size axis; `None` keeps `base.n_sites`.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub config: TrajectoryConfig,
    pub realizations: usize,
    pub output: PathBuf,
    #[serde(default)]
    pub fit_range: SizeRange,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    #[serde(default)]
    pub gradient_method: GradientMethod,
}

fn default_sigmas() -> f64 {
    DEFAULT_SIGMAS
}

/// One model instance of a campaign with the group it is fitted in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub label: String,
    pub spec: SystemSpec,
}

impl Campaign {
    pub fn from_file(path: &Path) -> Result<Self, CampaignError> {
        read_json(path)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Invalid(m));
        if self.values.is_empty() {
            return bad("scan value list is empty".into());
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("scan values must be strictly increasing".into());
        }
        if let Some(sizes) = &self.sizes {
            if self.axis == ScanAxis::Size {
                return bad("`sizes` only applies to non-size axes".into());
            }
            if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
                return bad("sizes must be non-empty and strictly increasing".into());
            }
        }
        if self.realizations < 2 {
            return bad(format!(
                "need at least 2 realizations, got {}",
                self.realizations
            ));
        }
        if !(self.sigmas > 0.0) {
            return bad(format!("sigmas must be > 0, got {}", self.sigmas));
        }
        self.config.validate()?;
        for p in self.points()? {
            p.spec.validate()?;
        }
        Ok(())
    }

    /// Scan points in execution order, grouped by label.
    pub fn points(&self) -> Result<Vec<ScanPoint>, CampaignError> {
        let mut out = Vec::new();
        for &v in &self.values {
            let mut spec = self.base.clone();
            self.axis.apply(&mut spec, v)?;
            if self.axis == ScanAxis::Size {
                out.push(ScanPoint {
                    label: "size_scan".into(),
                    spec,
                });
                continue;
            }
            let label = format!("{}={}", self.axis.name(), v);
            match &self.sizes {
                None => out.push(ScanPoint { label, spec }),
                Some(sizes) => {
                    for &n in sizes {
                        out.push(ScanPoint {
                            label: label.clone(),
                            spec: SystemSpec {
                                n_sites: n,
                                ..spec.clone()
                            },
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    fn resolve_gradient_method(&self, spec: &SystemSpec) -> GradientMethod {
        match self.gradient_method {
            GradientMethod::Auto if spec.epsilon != 0.0 => GradientMethod::LeastSquares,
            GradientMethod::Auto => GradientMethod::PairDifferences,
            m => m,
        }
    }
}

/// Worker count from the flag, else the environment, else all cores.
pub fn worker_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(WORKERS_ENV).ok()?.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Persisted result of one scan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub spec_hash: String,
    pub spec: SystemSpec,
    pub config: TrajectoryConfig,
    pub realizations: usize,
    pub profile: ProfileEstimate,
    pub current: CurrentEstimate,
    pub gradient: Option<Measured>,
    pub gradient_method: GradientMethod,
    pub jump_rate: Measured,
}

impl PointResult {
    pub fn record(&self) -> ScalingRecord {
        ScalingRecord {
            size: self.spec.n_sites,
            current: self.current.mean,
            current_error: self.current.std_error,
            gradient: self.gradient.map(|g| g.mean),
            gradient_error: self.gradient.map(|g| g.std_error),
        }
    }
}

/// Runs the ensemble for one model and reduces it to profile, current and gradient.
pub fn run_point(
    spec: &SystemSpec,
    config: &TrajectoryConfig,
    realizations: usize,
    method: GradientMethod,
) -> Result<PointResult, CampaignError> {
    let model = Model::<f64>::assemble(spec)?;
    let observables = ObservableSet::from_model(&model);
    let sim = Simulation::<f64>::new(spec, config)?;
    let ens = sim.run_ensemble(&observables.operators(), realizations)?;
    let profile = observables.profile(&ens.estimates)?;
    let n_sites = profile.site_energies.len();
    let per_realization: Vec<Vec<f64>> = ens
        .trajectories
        .iter()
        .map(|t| t.means[n_sites..].to_vec())
        .collect();
    let current = steady_current_from_realizations(&profile.bond_currents, &per_realization)?;
    let gradient = match method {
        _ if profile.site_energies.len() < 5 => None,
        GradientMethod::LeastSquares => Some(crate::analysis::fit_gradient(&profile)?),
        _ => {
            let g = mean_gradient(&profile)?;
            Some(Measured {
                index: 0,
                mean: g.mean,
                std_error: g.std_error,
            })
        }
    };
    Ok(PointResult {
        spec_hash: spec.canonical_hash(),
        spec: spec.clone(),
        config: config.clone(),
        realizations,
        profile,
        current,
        gradient,
        gradient_method: method,
        jump_rate: Measured {
            index: 0,
            mean: ens.jump_rate.mean,
            std_error: ens.jump_rate.std_error,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointStatus {
    Completed {
        wall_time_s: f64,
    },
    /// Found on disk with matching inputs.
    Resumed,
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub spec_hash: String,
    pub n_sites: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub seed: u64,
    pub realizations: usize,
    pub workers: usize,
    pub points: Vec<ManifestEntry>,
    /// Analysis failures by group label.
    pub analysis_errors: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.points
            .iter()
            .filter(|p| matches!(p.status, PointStatus::Failed { .. }))
            .count()
    }
}

fn point_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join("points").join(format!("{hash}.json"))
}

fn load_completed(dir: &Path, spec: &SystemSpec, c: &Campaign) -> Option<PointResult> {
    let r: PointResult = read_json(&point_path(dir, &spec.canonical_hash())).ok()?;
    (r.spec == *spec && r.config == c.config && r.realizations == c.realizations).then_some(r)
}

fn persist_point(dir: &Path, r: &PointResult) -> Result<(), CampaignError> {
    let n = r.spec.n_sites;
    let base = dir.join("points");
    let mut sites = Vec::new();
    write_site_csv(&mut sites, n, &r.profile.site_energies, true).expect("in-memory write");
    let mut bonds = Vec::new();
    write_bond_csv(&mut bonds, n, &r.profile.bond_currents, true).expect("in-memory write");
    let p = base.join(format!("{}_sites.csv", r.spec_hash));
    fs::write(&p, sites).map_err(io_err(&p))?;
    let p = base.join(format!("{}_bonds.csv", r.spec_hash));
    fs::write(&p, bonds).map_err(io_err(&p))?;
    // the JSON marks completion, so it is written last
    write_json(&point_path(dir, &r.spec_hash), r)
}

/// Runs (or resumes) every scan point, then the per-group analysis.
///
/// A failing point is recorded in the manifest and the scan continues.
pub fn run_campaign(campaign: &Campaign, workers: usize) -> Result<Manifest, CampaignError> {
    campaign.validate()?;
    let dir = &campaign.output;
    let points_dir = dir.join("points");
    fs::create_dir_all(&points_dir).map_err(io_err(&points_dir))?;
    write_json(&dir.join("campaign.json"), campaign)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CampaignError::Invalid(format!("thread pool: {e}")))?;

    let start = Instant::now();
    let mut entries = Vec::new();
    for p in campaign.points()? {
        let hash = p.spec.canonical_hash();
        let status = if load_completed(dir, &p.spec, campaign).is_some() {
            PointStatus::Resumed
        } else {
            let t = Instant::now();
            let method = campaign.resolve_gradient_method(&p.spec);
            let outcome = pool
                .install(|| run_point(&p.spec, &campaign.config, campaign.realizations, method))
                .and_then(|r| persist_point(dir, &r));
            match outcome {
                Ok(()) => PointStatus::Completed {
                    wall_time_s: t.elapsed().as_secs_f64(),
                },
                Err(e) => PointStatus::Failed {
                    error: e.to_string(),
                },
            }
        };
        entries.push(ManifestEntry {
            label: p.label,
            spec_hash: hash,
            n_sites: p.spec.n_sites,
            seed: campaign.config.seed,
            status,
        });
    }
    let analysis_errors = analyze_bundle(campaign)?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: campaign.config.seed,
        realizations: campaign.realizations,
        workers,
        points: entries,
        analysis_errors,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Completed point results of a bundle, grouped by label in scan order.
pub fn load_groups(campaign: &Campaign) -> Result<Vec<(String, Vec<PointResult>)>, CampaignError> {
    let mut groups: Vec<(String, Vec<PointResult>)> = Vec::new();
    for p in campaign.points()? {
        let Some(r) = load_completed(&campaign.output, &p.spec, campaign) else {
            continue;
        };
        match groups.last_mut() {
            Some((label, v)) if *label == p.label => v.push(r),
            _ => groups.push((p.label, vec![r])),
        }
    }
    Ok(groups)
}

/// Fits every group with at least three sizes; returns per-group errors.
pub fn analyze_bundle(campaign: &Campaign) -> Result<BTreeMap<String, String>, CampaignError> {
    let dir = campaign.output.join("analysis");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut errors = BTreeMap::new();
    for (label, results) in load_groups(campaign)? {
        let records: Vec<ScalingRecord> = results.iter().map(PointResult::record).collect();
        let summary = match summarize(&records, campaign.fit_range, campaign.sigmas) {
            Ok(s) => s,
            Err(e) => {
                errors.insert(label, e.to_string());
                continue;
            }
        };
        write_json(&dir.join(format!("{label}.json")), &summary)?;
        write_group_csvs(&dir, &label, &records, &summary)?;
    }
    Ok(errors)
}

fn write_group_csvs(
    dir: &Path,
    label: &str,
    records: &[ScalingRecord],
    summary: &AnalysisSummary,
) -> Result<(), CampaignError> {
    let ex = &summary.extrapolation;
    let mut buf = Vec::new();
    write_fit_csv(&mut buf, &current_points(records), Some(&ex.current_fit))
        .expect("in-memory write");
    let p = dir.join(format!("{label}_current.csv"));
    fs::write(&p, buf).map_err(io_err(&p))?;
    let grad = gradient_points(records);
    if !grad.is_empty() {
        let mut buf = Vec::new();
        write_fit_csv(&mut buf, &grad, ex.gradient_fit.as_ref()).expect("in-memory write");
        let p = dir.join(format!("{label}_gradient.csv"));
        fs::write(&p, buf).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Reads `analysis/<label>.json` summaries of a finished bundle.
pub fn load_summaries(
    campaign: &Campaign,
) -> Result<Vec<(String, AnalysisSummary)>, CampaignError> {
    let mut out = Vec::new();
    for (label, _) in load_groups(campaign)? {
        let path = campaign
            .output
            .join("analysis")
            .join(format!("{label}.json"));
        if path.exists() {
            out.push((label, read_json(&path)?));
        }
    }
    Ok(out)
}

/// Writes combined profile and current tables of a bundle into `out`.
pub fn export(campaign: &Campaign, out: &Path) -> Result<Vec<PathBuf>, CampaignError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();
    for (label, results) in load_groups(campaign)? {
        let mut sites = Vec::new();
        let mut bonds = Vec::new();
        for (i, r) in results.iter().enumerate() {
            let n = r.spec.n_sites;
            write_site_csv(&mut sites, n, &r.profile.site_energies, i == 0)
                .expect("in-memory write");
            write_bond_csv(&mut bonds, n, &r.profile.bond_currents, i == 0)
                .expect("in-memory write");
        }
        let mut totals = String::from("size,current,current_error,gradient,gradient_error\n");
        for r in &results {
            let rec = r.record();
            totals.push_str(&format!(
                "{},{:.15e},{:.15e},{:.15e},{:.15e}\n",
                rec.size,
                rec.current,
                rec.current_error,
                rec.gradient.unwrap_or(f64::NAN),
                rec.gradient_error.unwrap_or(f64::NAN)
            ));
        }
        for (suffix, data) in [
            ("profile", sites),
            ("bonds", bonds),
            ("scaling", totals.into_bytes()),
        ] {
            let p = out.join(format!("{label}_{suffix}.csv"));
            fs::write(&p, data).map_err(io_err(&p))?;
            written.push(p);
        }
    }
    Ok(written)
}

/// One observable compared between the exact solver and trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub observable: String,
    pub exact: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub spec_hash: String,
    pub realizations: usize,
    pub rows: Vec<VerifyRow>,
    pub max_abs_z: f64,
    pub mismatch: bool,
}

/// Compares trajectories of `spec` against the exact steady state of `spec`.
pub fn verify(
    spec: &SystemSpec,
    config: &TrajectoryConfig,
    realizations: usize,
) -> Result<VerifyReport, CampaignError> {
    verify_pair(spec, spec, config, realizations)
}

/// Exact values from `exact_spec`, trajectories from `sampled_spec`.
///
/// Differing specs give a negative control; both must describe the same
/// operator layout.
pub fn verify_pair(
    exact_spec: &SystemSpec,
    sampled_spec: &SystemSpec,
    config: &TrajectoryConfig,
    realizations: usize,
) -> Result<VerifyReport, CampaignError> {
    for s in [exact_spec, sampled_spec] {
        if s.n_spins() > VERIFY_MAX_SPINS {
            return Err(OracleError::TooLarge {
                spins: s.n_spins(),
                max: VERIFY_MAX_SPINS,
            }
            .into());
        }
    }
    if (exact_spec.topology, exact_spec.n_sites) != (sampled_spec.topology, sampled_spec.n_sites) {
        return Err(CampaignError::Invalid(
            "compared specs differ in layout".into(),
        ));
    }
    let fixture = Fixture::compute(exact_spec, &OracleLimits::default())?;
    let model = Model::<f64>::assemble(sampled_spec)?;
    let observables = ObservableSet::from_model(&model);
    let sim = Simulation::<f64>::new(sampled_spec, config)?;
    let ens = sim.run_ensemble(&observables.operators(), realizations)?;
    let names = (1..=fixture.site_energies.len())
        .map(|mu| format!("h{mu}"))
        .chain((1..=fixture.bond_currents.len()).map(|mu| format!("J{mu},{}", mu + 1)));
    let rows: Vec<VerifyRow> = names
        .zip(fixture.values())
        .zip(&ens.estimates)
        .map(|((observable, exact), est)| VerifyRow {
            observable,
            exact,
            mean: est.mean,
            std_error: est.std_error,
            z: est.z_score(exact),
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(VerifyReport {
        spec_hash: sampled_spec.canonical_hash(),
        realizations,
        rows,
        max_abs_z,
        mismatch: max_abs_z > VERIFY_Z_LIMIT,
    })
}
