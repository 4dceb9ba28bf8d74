use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bathchain::analysis::{summarize, ScalingRecord, SizeRange};
use bathchain::campaign::{
    analyze_bundle, export, load_groups, run_campaign, verify, worker_count, Campaign,
    CampaignError, PointResult, VerifyReport,
};
use bathchain::mcwf::TrajectoryConfig;
use bathchain::model::SystemSpec;
use clap::{Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

/// Heat transport in boundary-driven spin chains and ladders.
#[derive(Debug, Parser)]
#[command(name = "bathchain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) a parameter scan described by a campaign JSON file.
    Run {
        campaign: PathBuf,
        /// Overrides the trajectory seed of the campaign.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads [default: $BATHCHAIN_WORKERS, else all cores].
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the output directory of the campaign.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare trajectories against the exact steady state (at most 4 spins).
    Verify {
        /// SystemSpec JSON; defaults to the reference chain.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// TrajectoryConfig JSON; defaults to the reference settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        realizations: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the scaling analysis on an existing bundle.
    Fit {
        bundle: PathBuf,
        #[arg(long)]
        min_size: Option<usize>,
        #[arg(long)]
        max_size: Option<usize>,
        /// Significance threshold in standard errors.
        #[arg(long)]
        sigmas: Option<f64>,
    },
    /// Write combined profile, bond and scaling CSVs of a bundle.
    Export {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        let code = if e.is_validation() || matches!(e, CampaignError::Io { .. }) {
            EXIT_VALIDATION
        } else {
            EXIT_NUMERICAL
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

fn validation(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(validation)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(validation)
}

fn load_bundle(bundle: &Path) -> Result<Campaign, Failure> {
    let mut c: Campaign = read_json(&bundle.join("campaign.json"))?;
    c.output = bundle.to_path_buf();
    Ok(c)
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut campaign: Campaign = read_json(path)?;
    if let Some(s) = seed {
        campaign.config.seed = s;
    }
    if let Some(o) = out {
        campaign.output = o;
    }
    let workers = worker_count(workers);
    let manifest = run_campaign(&campaign, workers)?;
    for p in &manifest.points {
        println!(
            "{} N={} {}: {:?}",
            p.label,
            p.n_sites,
            &p.spec_hash[..12],
            p.status
        );
    }
    for (label, e) in &manifest.analysis_errors {
        println!("{label}: analysis skipped: {e}");
    }
    print_summaries(&campaign)?;
    if manifest.failures() > 0 {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            error: anyhow::anyhow!(
                "{} scan point(s) failed; see manifest.json",
                manifest.failures()
            ),
        });
    }
    Ok(())
}

fn print_summaries(campaign: &Campaign) -> Result<(), Failure> {
    for (label, results) in load_groups(campaign)? {
        let records: Vec<ScalingRecord> = results.iter().map(PointResult::record).collect();
        match summarize(&records, campaign.fit_range, campaign.sigmas) {
            Ok(s) => {
                let j = s.extrapolation.current_infinite;
                print!(
                    "{label}: J_inf = {:.6e} +- {:.2e}, {:?}",
                    j.value, j.error, s.classification
                );
                match s.conductivity {
                    Some(k) => println!(", kappa = {:.4e} +- {:.2e}", k.kappa, k.error),
                    None => println!(),
                }
            }
            Err(e) => println!("{label}: {e}"),
        }
    }
    Ok(())
}

fn print_report(r: &VerifyReport) {
    println!(
        "{:<10} {:>16} {:>16} {:>12} {:>8}",
        "observable", "exact", "mcwf", "std_error", "z"
    );
    for row in &r.rows {
        println!(
            "{:<10} {:>16.9e} {:>16.9e} {:>12.3e} {:>8.2}",
            row.observable, row.exact, row.mean, row.std_error, row.z
        );
    }
    println!("max |z| = {:.2} over R = {}", r.max_abs_z, r.realizations);
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            campaign,
            seed,
            workers,
            out,
        } => cmd_run(&campaign, seed, workers, out),
        Command::Verify {
            spec,
            config,
            realizations,
            seed,
            workers,
            out,
        } => {
            let spec: SystemSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SystemSpec::default(),
            };
            let mut config: TrajectoryConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrajectoryConfig::default(),
            };
            if let Some(s) = seed {
                config.seed = s;
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(worker_count(workers))
                .build()
                .map_err(|e| validation(e.into()))?;
            let report = pool.install(|| verify(&spec, &config, realizations))?;
            print_report(&report);
            if let Some(p) = out {
                std::fs::write(
                    &p,
                    serde_json::to_string_pretty(&report).expect("report serializes"),
                )
                .with_context(|| format!("writing {}", p.display()))
                .map_err(validation)?;
            }
            if report.mismatch {
                return Err(Failure {
                    code: EXIT_MISMATCH,
                    error: anyhow::anyhow!("verification mismatch"),
                });
            }
            Ok(())
        }
        Command::Fit {
            bundle,
            min_size,
            max_size,
            sigmas,
        } => {
            let mut c = load_bundle(&bundle)?;
            if min_size.is_some() || max_size.is_some() {
                c.fit_range = SizeRange {
                    min: min_size,
                    max: max_size,
                };
            }
            if let Some(s) = sigmas {
                c.sigmas = s;
            }
            for (label, e) in analyze_bundle(&c)? {
                println!("{label}: analysis skipped: {e}");
            }
            print_summaries(&c)
        }
        Command::Export { bundle, out } => {
            let c = load_bundle(&bundle)?;
            for p in export(&c, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
