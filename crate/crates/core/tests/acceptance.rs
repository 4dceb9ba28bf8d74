//! Acceptance criteria, one test per criterion.
//!
//! Each test prints a single `PASS`/`FAIL` line before asserting. Criteria 4
//! to 9 are ignored by default; run them in release with
//!
//! ```text
//! cargo test --release -p bathchain --test acceptance -- --ignored --test-threads=1
//! ```
//!
//! Their scan points are stored as resumable bundles under
//! `$BATHCHAIN_ACCEPTANCE_DIR` (default `target/tmp/acceptance`), so an
//! interrupted run picks up where it stopped.

use std::path::PathBuf;

use bathchain::analysis::{
    weighted_linear_fit, AnalysisSummary, FitPoint, SizeRange, Transport, DEFAULT_SIGMAS,
};
use bathchain::baths::{gamma_matrix, symmetric_eigen2, thermal_rate};
use bathchain::campaign::load_groups;
use bathchain::campaign::{
    load_summaries, run_campaign, verify, Campaign, GradientMethod, PointResult, ScanAxis,
};
use bathchain::mcwf::{
    effective_hamiltonian, Integrator, Propagator, StateVector, TrajectoryConfig, TrajectorySeed,
    Workspace,
};
use bathchain::model::{Model, SystemSpec};
use bathchain::observables::ObservableSet;
use bathchain::oracle::{
    build_liouvillian, liouvillian_from_channels, DensityMatrix, Fixture, OpenSystem, OracleLimits,
};
use bathchain::sparse::{pauli, CsrOperator};
use bathchain::{baths, Cplx, Simulation};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMAS: f64 = 3.0;
const HEAVY_REALIZATIONS: usize = 8;

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {criterion} ({name}): {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn reference_config() -> TrajectoryConfig {
    TrajectoryConfig {
        t0: 1.0e4,
        t_total: 100_000,
        ..Default::default()
    }
}

fn random_spec(rng: &mut ChaCha8Rng) -> SystemSpec {
    let common = |rng: &mut ChaCha8Rng, s: SystemSpec| SystemSpec {
        j_coupling: rng.random_range(0.001..0.05),
        omega: rng.random_range(0.5..2.0),
        lambda: rng.random_range(0.001..0.05),
        beta_left: rng.random_range(0.05..3.0),
        beta_right: rng.random_range(0.05..3.0),
        ..s
    };
    if rng.random_bool(0.25) {
        let ladder = SystemSpec::ladder(2, rng.random_range(0.0..0.05));
        common(rng, ladder)
    } else {
        let chain = SystemSpec {
            n_sites: rng.random_range(2..=4),
            delta: rng.random_range(0.0..2.0),
            epsilon: rng.random_range(0.0..0.1),
            ..SystemSpec::default()
        };
        common(rng, chain)
    }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let specs = [
        SystemSpec::chain(2, 1.0),
        SystemSpec::chain(3, 1.0),
        SystemSpec::chain(4, 1.0),
        SystemSpec::ladder(2, 0.01),
    ];
    let mut worst = (0.0f64, String::new());
    let mut compared = 0;
    for spec in &specs {
        let r = verify(spec, &reference_config(), 32).unwrap();
        compared += r.rows.len();
        for row in &r.rows {
            if row.z.abs() > worst.0 {
                worst = (
                    row.z.abs(),
                    format!("{:?} N={} {}", spec.topology, spec.n_sites, row.observable),
                );
            }
        }
    }
    report(
        1,
        "oracle equivalence",
        worst.0 <= SIGMAS,
        &format!(
            "{compared} observables at R=32, max |z| = {:.2} ({})",
            worst.0, worst.1
        ),
    );
}

#[test]
fn criterion_02_dissipator_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let spec = random_spec(&mut rng);
        let a = build_liouvillian(&spec).unwrap();
        let b = liouvillian_from_channels(&spec).unwrap();
        worst = worst.max((a - b).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    report(
        2,
        "dissipator consistency",
        worst <= 1e-12,
        &format!("20 random sets, max |diff| = {worst:.2e}"),
    );
}

#[test]
fn criterion_03_single_bath_thermalization() {
    let (omega, beta, lambda) = (1.0, 0.5, 0.01);
    let (a, b) = (
        (-beta * omega / 2.0f64).exp(),
        (beta * omega / 2.0f64).exp(),
    );
    let gibbs = [a / (a + b), b / (a + b)];
    let rho = OpenSystem::single_spin(omega, beta, lambda)
        .unwrap()
        .steady_state(&OracleLimits::default())
        .unwrap()
        .rho;
    let m = rho.entries();
    let oracle_err = (m[(0, 0)].re - gibbs[0])
        .abs()
        .max((m[(1, 1)].re - gibbs[1]).abs())
        .max(m[(0, 1)].norm())
        .max(m[(1, 0)].norm());

    let (h, channels) = OpenSystem::single_spin_channels(omega, beta, lambda).unwrap();
    let sim = Simulation::from_parts(h, channels, &reference_config()).unwrap();
    let sz = CsrOperator::embed(1, &[(0, pauli::z())]);
    let est = sim.run_ensemble(&[sz], 32).unwrap().estimates[0];
    let z = est.z_score(gibbs[0] - gibbs[1]);
    report(
        3,
        "single-bath thermalization",
        oracle_err <= 1e-10 && z.abs() <= SIGMAS,
        &format!(
            "oracle deviation {oracle_err:.1e}; MCWF <sz> = {:.5} +- {:.1e} vs {:.5} (z = {z:.2})",
            est.mean,
            est.std_error,
            gibbs[0] - gibbs[1]
        ),
    );
}

/// Independent weighted least squares: QR solve of the whitened design matrix.
fn qr_fit(points: &[FitPoint]) -> (f64, f64) {
    let n = points.len();
    let a = DMatrix::from_fn(
        n,
        2,
        |i, j| if j == 0 { 1.0 } else { points[i].x } / points[i].y_error,
    );
    let y = DVector::from_fn(n, |i, _| points[i].y / points[i].y_error);
    let qr = a.qr();
    let coef = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * y))
        .unwrap();
    (coef[0], coef[1])
}

#[test]
fn criterion_10_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let mut gamma_ok = true;
    let mut balance_ok = true;
    for _ in 0..200 {
        let (omega, beta, lambda) = (
            rng.random_range(0.05..5.0),
            rng.random_range(0.01..10.0),
            rng.random_range(1e-4..0.1),
        );
        let g = gamma_matrix(omega, beta, lambda).unwrap();
        let [(hi, _), (lo, _)] = symmetric_eigen2(&g);
        let tr = g[0][0] + g[1][1];
        gamma_ok &= lo.abs() <= 1e-13 * tr && hi > 0.0 && (hi - tr).abs() <= 1e-13 * tr;
        let ratio = thermal_rate(-omega, beta, lambda).unwrap()
            / thermal_rate(omega, beta, lambda).unwrap();
        balance_ok &= (ratio / (beta * omega).exp() - 1.0).abs() <= 1e-12;
    }
    check("gamma rank one and positive semidefinite", gamma_ok);
    check("detailed balance", balance_ok);

    let mut norm_ok = true;
    for _ in 0..10 {
        let spec = random_spec(&mut rng);
        let m = Model::<f64>::assemble(&spec).unwrap();
        let h_eff =
            effective_hamiltonian(&m.hamiltonian, &baths::build_channels(&spec).unwrap()).unwrap();
        for integrator in [Integrator::SplitDiagonal, Integrator::Rk4] {
            let substep = if integrator == Integrator::Rk4 {
                0.05
            } else {
                0.5
            };
            let prop = Propagator::new(h_eff.clone(), integrator, substep).unwrap();
            let amps = (0..spec.dim())
                .map(|_| Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let mut state = StateVector::new(amps.collect());
            state.normalize();
            let mut ws = Workspace::new(spec.dim());
            let mut last = 1.0;
            for _ in 0..30 {
                prop.propagate(&mut state, 1.0, &mut ws).unwrap();
                norm_ok &= state.squared_norm() <= last * (1.0 + 1e-12);
                last = state.squared_norm();
            }
        }
    }
    check("norm monotone without jumps", norm_ok);

    let mut rho_ok = true;
    for _ in 0..5 {
        let spec = random_spec(&mut rng);
        let sys = OpenSystem::from_spec(&spec).unwrap();
        let psi: Vec<_> = (0..spec.dim())
            .map(|_| Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let rho0 = DensityMatrix::from_pure(&psi);
        for t in [1.0, 100.0, 1e4] {
            let inv = sys
                .propagate(&rho0, t, &OracleLimits::default())
                .unwrap()
                .invariants();
            rho_ok &= inv.trace < 1e-10 && inv.hermiticity < 1e-10 && inv.min_eigenvalue > -1e-8;
        }
    }
    check("oracle trace, Hermiticity, positivity", rho_ok);

    let mut current_ok = true;
    let mut continuity_ok = true;
    for n in 2..=8 {
        let spec = SystemSpec {
            n_sites: n,
            delta: rng.random_range(0.0..2.0),
            j_coupling: rng.random_range(0.001..0.05),
            ..SystemSpec::default()
        };
        let m = Model::<f64>::assemble(&spec).unwrap();
        for mu in 0..n - 1 {
            let pm = CsrOperator::<f64>::embed(n, &[(mu, pauli::plus()), (mu + 1, pauli::minus())]);
            let mp = CsrOperator::<f64>::embed(n, &[(mu, pauli::minus()), (mu + 1, pauli::plus())]);
            let closed = pm
                .sub(&mp)
                .unwrap()
                .scale(Cplx::new(0.0, -2.0 * spec.j_coupling * spec.omega));
            current_ok &= m.currents[mu].max_abs_diff(&closed).unwrap() < 1e-15;
        }
        for mu in 0..n {
            let lhs = m
                .hamiltonian
                .commutator(&m.local[mu])
                .unwrap()
                .scale(Cplx::new(0.0, 1.0));
            let mut rhs = CsrOperator::zeros(spec.dim());
            if mu + 1 < n {
                rhs = rhs.add(&m.currents[mu]).unwrap();
            }
            if mu > 0 {
                rhs = rhs.sub(&m.currents[mu - 1]).unwrap();
            }
            continuity_ok &= lhs.max_abs_diff(&rhs).unwrap() < 1e-15;
        }
    }
    check("current operator closed form", current_ok);
    check("continuity identity up to 8 spins", continuity_ok);

    let mut equilibrium_ok = true;
    for spec in [
        SystemSpec {
            beta_right: 0.5,
            ..SystemSpec::chain(3, 1.0)
        },
        SystemSpec {
            beta_left: 0.3,
            beta_right: 0.3,
            ..SystemSpec::ladder(2, 0.02)
        },
    ] {
        let f = Fixture::compute(&spec, &OracleLimits::default()).unwrap();
        equilibrium_ok &= f.bond_currents.iter().all(|j| j.abs() < 1e-10);
    }
    check("equilibrium carries no current", equilibrium_ok);

    let spec = SystemSpec::chain(3, 1.0);
    let obs = ObservableSet::from_model(&Model::<f64>::assemble(&spec).unwrap()).operators();
    let sim = Simulation::new(
        &spec,
        &TrajectoryConfig {
            t0: 10.0,
            t_total: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let seed = TrajectorySeed::new(4, 1);
    let same_seed =
        sim.run_trajectory(seed, &obs).unwrap() == sim.run_trajectory(seed, &obs).unwrap();
    let pooled = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| sim.run_ensemble(&obs, 3).unwrap())
    };
    check("seed determinism", same_seed && pooled(1) == pooled(2));

    let mut fit_ok = true;
    for _ in 0..20 {
        let points: Vec<FitPoint> = (0..rng.random_range(3..9))
            .map(|_| FitPoint {
                x: rng.random_range(0.0..1.0),
                y: rng.random_range(-1.0..1.0),
                y_error: rng.random_range(0.01..1.0),
            })
            .collect();
        let fit = weighted_linear_fit(&points).unwrap();
        let (a, b) = qr_fit(&points);
        fit_ok &= (fit.intercept - a).abs() <= 1e-9 * (1.0 + a.abs())
            && (fit.slope - b).abs() <= 1e-9 * (1.0 + b.abs());
    }
    check("weighted fit matches QR solution", fit_ok);

    let detail = if failures.is_empty() {
        "all property checks hold".to_string()
    } else {
        failures.join("; ")
    };
    report(10, "property suites", failures.is_empty(), &detail);
}

// Heavy scans.

fn acceptance_dir(name: &str) -> PathBuf {
    let root = std::env::var_os("BATHCHAIN_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"));
    root.join(name)
}

fn scan(
    bundle: &str,
    base: SystemSpec,
    axis: ScanAxis,
    values: Vec<f64>,
    sizes: Option<Vec<usize>>,
    fit_range: SizeRange,
) -> Campaign {
    Campaign {
        base,
        axis,
        values,
        sizes,
        config: reference_config(),
        realizations: HEAVY_REALIZATIONS,
        output: acceptance_dir(bundle),
        fit_range,
        sigmas: DEFAULT_SIGMAS,
        gradient_method: GradientMethod::Auto,
    }
}

fn chain_sizes() -> Vec<usize> {
    (5..=12).collect()
}

/// Chain fits leave out the smallest size.
fn chain_fit() -> SizeRange {
    SizeRange {
        min: Some(6),
        max: None,
    }
}

/// Runs or resumes the campaign and returns its analyses by label.
fn run_scan(c: &Campaign) -> Vec<(String, AnalysisSummary)> {
    let manifest = run_campaign(c, bathchain::campaign::worker_count(None)).unwrap();
    assert_eq!(
        manifest.failures(),
        0,
        "failed points in {}",
        c.output.display()
    );
    load_summaries(c).unwrap()
}

fn summary<'a>(all: &'a [(String, AnalysisSummary)], label: &str) -> &'a AnalysisSummary {
    &all.iter()
        .find(|(l, _)| l == label)
        .unwrap_or_else(|| panic!("no analysis for {label}"))
        .1
}

fn describe(s: &AnalysisSummary) -> String {
    let j = s.extrapolation.current_infinite;
    let mut out = format!(
        "J_inf = {:.3e} +- {:.1e}, {:?}",
        j.value, j.error, s.classification
    );
    if let Some(g) = s.extrapolation.gradient_infinite {
        out += &format!(", grad_inf = {:.2e} +- {:.1e}", g.value, g.error);
    }
    if let Some(k) = s.conductivity {
        out += &format!(", kappa = {:.3e} +- {:.1e}", k.kappa, k.error);
    }
    out
}

/// The Heisenberg scan at the reference coupling doubles as one lambda value.
fn heisenberg_lambda_scan(values: Vec<f64>) -> Campaign {
    scan(
        "heisenberg_lambda",
        SystemSpec::chain(5, 1.0),
        ScanAxis::Lambda,
        values,
        Some(chain_sizes()),
        chain_fit(),
    )
}

#[test]
#[ignore = "hours; run in release"]
fn criterion_04_xy_current() {
    let c = scan(
        "xy",
        SystemSpec::chain(9, 0.0),
        ScanAxis::Size,
        vec![9.0, 10.0, 11.0, 12.0],
        None,
        SizeRange::default(),
    );
    let all = run_scan(&c);
    let s = summary(&all, "size_scan");
    let (reference, reference_error) = (5.33e-4, 0.05e-4);
    let groups = load_groups(&c).unwrap();
    let points: &[PointResult] = &groups[0].1;
    let mut ok = true;
    let mut parts = Vec::new();
    for p in points {
        let combined = p.current.std_error.hypot(reference_error);
        let z = (p.current.mean - reference) / combined;
        let g = p.gradient.expect("N >= 5 has a gradient");
        let flat = g.mean.abs() <= SIGMAS * g.std_error;
        ok &= z.abs() <= SIGMAS && flat;
        parts.push(format!(
            "N={} J={:.4e} (z={z:.2}) grad={:.1e}+-{:.1e}",
            p.spec.n_sites, p.current.mean, g.mean, g.std_error
        ));
    }
    let fit = &s.extrapolation.current_fit;
    let size_independent = fit.slope.abs() <= SIGMAS * fit.slope_error;
    parts.push(format!(
        "slope = {:.2e} +- {:.1e}",
        fit.slope, fit.slope_error
    ));
    report(4, "XY current", ok && size_independent, &parts.join("; "));
}

#[test]
#[ignore = "hours; run in release"]
fn criterion_05_heisenberg_ballistic() {
    let all = run_scan(&heisenberg_lambda_scan(vec![0.01]));
    let s = summary(&all, "lambda=0.01");
    let gradient_vanishes = s
        .extrapolation
        .gradient_infinite
        .is_some_and(|g| g.value.abs() <= SIGMAS * g.error);
    let pass = s.classification == Transport::Ballistic && gradient_vanishes;
    report(5, "Heisenberg ballistic", pass, &describe(s));
}

#[test]
#[ignore = "overnight; run in release"]
fn criterion_06_diffusive_conductivity() {
    let all = run_scan(&scan(
        "delta",
        SystemSpec::chain(5, 1.6),
        ScanAxis::Delta,
        vec![1.6],
        Some(chain_sizes()),
        chain_fit(),
    ));
    let s = summary(&all, "delta=1.6");
    let j = s.extrapolation.current_infinite;
    let kappa_ok = s
        .conductivity
        .is_some_and(|k| ((k.kappa - 2.34e-2) / 2.34e-2).abs() <= 0.25);
    let pass = j.value.abs() <= SIGMAS * j.error && kappa_ok;
    report(
        6,
        "diffusive conductivity",
        pass,
        &format!("{} (reference kappa 2.34e-2)", describe(s)),
    );
}

#[test]
#[ignore = "overnight; run in release"]
fn criterion_07_alternating_threshold() {
    let c = scan(
        "epsilon",
        SystemSpec::chain(5, 1.0),
        ScanAxis::Epsilon,
        vec![0.01, 0.02, 0.03],
        Some(chain_sizes()),
        chain_fit(),
    );
    let all = run_scan(&c);
    let (low, mid, high) = (
        summary(&all, "epsilon=0.01"),
        summary(&all, "epsilon=0.02"),
        summary(&all, "epsilon=0.03"),
    );
    // the flip is resolved only to the grid: ballistic below, diffusive above
    let flips =
        low.classification == Transport::Ballistic && high.classification == Transport::Diffusive;
    let kappa_ok = mid
        .conductivity
        .is_some_and(|k| ((k.kappa - 1.29e-2) / 1.29e-2).abs() <= 0.25);
    report(
        7,
        "alternating-field threshold",
        flips && kappa_ok,
        &format!(
            "0.01: {}; 0.02: {}; 0.03: {} (reference kappa 1.29e-2)",
            describe(low),
            describe(mid),
            describe(high)
        ),
    );
}

#[test]
#[ignore = "hours; run in release"]
fn criterion_08_ladder_ballistic() {
    let c = scan(
        "ladder",
        SystemSpec::ladder(2, 0.01),
        ScanAxis::JPrime,
        vec![0.01, 0.02],
        Some(vec![2, 3, 4, 5]),
        // the three largest rung counts
        SizeRange {
            min: Some(3),
            max: None,
        },
    );
    let all = run_scan(&c);
    let (a, b) = (summary(&all, "j_prime=0.01"), summary(&all, "j_prime=0.02"));
    let pass = a.classification == Transport::Ballistic && b.classification == Transport::Ballistic;
    report(
        8,
        "ladder ballistic",
        pass,
        &format!("J'=0.01: {}; J'=0.02: {}", describe(a), describe(b)),
    );
}

#[test]
#[ignore = "overnight; run in release"]
fn criterion_09_lambda_robustness() {
    let all = run_scan(&heisenberg_lambda_scan(vec![0.005, 0.01, 0.02]));
    let labels = ["lambda=0.005", "lambda=0.01", "lambda=0.02"];
    let j: Vec<_> = labels
        .iter()
        .map(|l| summary(&all, l).extrapolation.current_infinite)
        .collect();
    let mut ok = true;
    for a in 0..j.len() {
        for b in a + 1..j.len() {
            ok &= (j[a].value - j[b].value).abs() <= j[a].error.hypot(j[b].error);
        }
    }
    let detail: Vec<_> = labels
        .iter()
        .zip(&j)
        .map(|(l, v)| format!("{l}: J_inf = {:.3e} +- {:.1e}", v.value, v.error))
        .collect();
    report(9, "lambda robustness", ok, &detail.join("; "));
}
