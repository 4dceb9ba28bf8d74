use bathchain::baths::thermal_rate;
use bathchain::mcwf::{
    realization_seeds, InitialState, JumpMode, Simulation, StationaryEstimate, TrajectoryConfig,
    TrajectorySeed,
};
use bathchain::model::{Model, SystemSpec};
use bathchain::observables::ObservableSet;
use bathchain::oracle::{DensityMatrix, Fixture, OpenSystem, OracleLimits};
use bathchain::sparse::{pauli, CsrOperator};

fn short(t0: f64, t_total: usize) -> TrajectoryConfig {
    TrajectoryConfig {
        t0,
        t_total,
        ..Default::default()
    }
}

fn sigma_z() -> CsrOperator<f64> {
    CsrOperator::embed(1, &[(0, pauli::z())])
}

/// Ensemble mean and standard error of `op` over normalized sampled states.
fn sampled_mean(
    states: &[Vec<bathchain::StateVector>],
    k: usize,
    op: &CsrOperator<f64>,
) -> StationaryEstimate {
    let values: Vec<f64> = states.iter().map(|s| s[k].expectation(op)).collect();
    StationaryEstimate::from_realizations(&values, 1)
}

#[test]
fn single_spin_relaxes_exponentially() {
    let (omega, beta, lambda) = (1.0, 0.5, 0.01);
    let (h, channels) = OpenSystem::single_spin_channels(omega, beta, lambda).unwrap();
    let config = TrajectoryConfig {
        initial_state: InitialState::Basis(0),
        ..short(0.0, 1)
    };
    let sim = Simulation::from_parts(h, channels, &config).unwrap();
    let times = [0.0, 10.0, 25.0, 50.0, 100.0];
    let states: Vec<_> = realization_seeds(3, 4000)
        .into_iter()
        .map(|s| sim.sample_states(s, &times).unwrap())
        .collect();
    let up = thermal_rate(omega, beta, lambda).unwrap();
    let down = thermal_rate(-omega, beta, lambda).unwrap();
    let rate = up + down;
    let z_eq = (up - down) / rate;
    for (k, &t) in times.iter().enumerate() {
        let expected = z_eq + (1.0 - z_eq) * (-rate * t).exp();
        let est = sampled_mean(&states, k, &sigma_z());
        assert!(
            est.z_score(expected).abs() < 4.0,
            "t={t}: {est:?} vs {expected}"
        );
    }
}

#[test]
fn trajectories_unravel_the_master_equation() {
    let spec = SystemSpec {
        j_coupling: 0.05,
        lambda: 0.05,
        ..SystemSpec::chain(2, 1.0)
    };
    let model = Model::<f64>::assemble(&spec).unwrap();
    let obs = ObservableSet::from_model(&model).operators();
    let config = TrajectoryConfig {
        initial_state: InitialState::Basis(0),
        ..short(0.0, 1)
    };
    let sim = Simulation::<f64>::new(&spec, &config).unwrap();
    let times = [5.0, 20.0, 60.0];
    let states: Vec<_> = realization_seeds(17, 2000)
        .into_iter()
        .map(|s| sim.sample_states(s, &times).unwrap())
        .collect();
    let system = OpenSystem::from_spec(&spec).unwrap();
    let mut psi0 = vec![bathchain::Cplx::new(0.0, 0.0); spec.dim()];
    psi0[0] = bathchain::Cplx::new(1.0, 0.0);
    let rho0 = DensityMatrix::from_pure(&psi0);
    for (k, &t) in times.iter().enumerate() {
        let rho = system
            .propagate(&rho0, t, &OracleLimits::default())
            .unwrap();
        for op in &obs {
            let est = sampled_mean(&states, k, op);
            let exact = rho.expectation(op);
            assert!(est.z_score(exact).abs() < 4.0, "t={t}: {est:?} vs {exact}");
        }
    }
}

#[test]
fn stationary_jump_rate_matches_populations() {
    let (omega, beta, lambda) = (1.0, 0.5, 0.02);
    let (h, channels) = OpenSystem::single_spin_channels(omega, beta, lambda).unwrap();
    let sim = Simulation::from_parts(h, channels, &short(100.0, 20_000)).unwrap();
    let ens = sim.run_ensemble(&[sigma_z()], 16).unwrap();
    let up = thermal_rate(omega, beta, lambda).unwrap();
    let down = thermal_rate(-omega, beta, lambda).unwrap();
    let (a, b) = (
        (-beta * omega / 2.0f64).exp(),
        (beta * omega / 2.0f64).exp(),
    );
    let (p_up, p_down) = (a / (a + b), b / (a + b));
    // E^+E = (up P_down + down P_up) / (up + down), rate up + down
    let expected = up * p_down + down * p_up;
    assert!(
        ens.jump_rate.z_score(expected).abs() < 4.0,
        "{:?} vs {expected}",
        ens.jump_rate
    );
    assert!(ens.estimates[0].z_score(p_up - p_down).abs() < 4.0);
}

#[test]
fn seeds_are_deterministic_and_thread_independent() {
    let spec = SystemSpec::chain(3, 1.0);
    let model = Model::<f64>::assemble(&spec).unwrap();
    let obs = ObservableSet::from_model(&model).operators();
    let sim = Simulation::<f64>::new(&spec, &short(50.0, 300)).unwrap();
    let seed = TrajectorySeed::new(9, 2);
    let a = sim.run_trajectory(seed, &obs).unwrap();
    let b = sim.run_trajectory(seed, &obs).unwrap();
    assert_eq!(a, b);
    let c = sim.run_trajectory(TrajectorySeed::new(9, 3), &obs).unwrap();
    assert_ne!(a.means, c.means);

    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| sim.run_ensemble(&obs, 4).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn jump_log_is_reproducible() {
    let spec = SystemSpec::chain(2, 0.0);
    let sim = Simulation::<f64>::new(&spec, &short(0.0, 500)).unwrap();
    let log = |seed| {
        let mut lines = Vec::new();
        sim.run_trajectory_logged(seed, &[], &mut |e| lines.push(e.to_json_line()))
            .unwrap();
        lines
    };
    let first = log(TrajectorySeed::new(1, 0));
    assert!(!first.is_empty());
    assert!(first[0].starts_with("{\"time\":"));
    assert_eq!(first, log(TrajectorySeed::new(1, 0)));
}

#[test]
fn ensemble_error_shrinks_like_inverse_sqrt() {
    let spec = SystemSpec::chain(2, 1.0);
    let model = Model::<f64>::assemble(&spec).unwrap();
    let obs = ObservableSet::from_model(&model).operators();
    let sim = Simulation::<f64>::new(&spec, &short(100.0, 400)).unwrap();
    let small = sim.run_ensemble(&obs, 32).unwrap();
    let large = sim.run_ensemble(&obs, 512).unwrap();
    for (s, l) in small.estimates.iter().zip(&large.estimates) {
        let ratio = s.std_error / l.std_error;
        // sqrt(512 / 32) = 4; the sample spread of 32 values is itself ~13% uncertain
        assert!((2.8..5.5).contains(&ratio), "{ratio}");
    }
}

#[test]
fn fixed_step_mode_reaches_gibbs_state() {
    let (omega, beta, lambda) = (1.0, 0.5, 0.01);
    let (h, channels) = OpenSystem::single_spin_channels(omega, beta, lambda).unwrap();
    let config = TrajectoryConfig {
        jump_mode: JumpMode::FixedStepFirstOrder,
        dt_sample: 0.5,
        substep: 0.5,
        ..short(200.0, 20_000)
    };
    let sim = Simulation::from_parts(h, channels, &config).unwrap();
    let ens = sim.run_ensemble(&[sigma_z()], 16).unwrap();
    let z_eq = -(beta * omega / 2.0f64).tanh();
    // first-order jump probabilities bias the result by O(rate * dt) ~ 1%
    assert!((ens.estimates[0].mean - z_eq).abs() < 0.02 + 4.0 * ens.estimates[0].std_error);
}

#[test]
fn single_trajectory_batch_errors_are_finite() {
    let spec = SystemSpec::chain(2, 0.0);
    let model = Model::<f64>::assemble(&spec).unwrap();
    let obs = ObservableSet::from_model(&model).operators();
    let est = bathchain::mcwf::run_trajectory::<f64>(&spec, &short(100.0, 3200), &obs).unwrap();
    assert_eq!(est.len(), 3);
    assert!(est
        .iter()
        .all(|e| e.std_error > 0.0 && e.std_error.is_finite() && e.n_realizations == 1));
}

#[test]
fn single_trajectory_and_ensemble_estimators_agree() {
    let spec = SystemSpec::chain(3, 1.0);
    let model = Model::<f64>::assemble(&spec).unwrap();
    let obs = ObservableSet::from_model(&model).operators();
    let exact = Fixture::compute(&spec, &OracleLimits::default())
        .unwrap()
        .values();

    let long = Simulation::<f64>::new(&spec, &short(1.0e4, 400_000)).unwrap();
    let single = long
        .run_trajectory(TrajectorySeed::new(8, 0), &obs)
        .unwrap();
    let ensemble = Simulation::<f64>::new(&spec, &short(1.0e4, 25_000))
        .unwrap()
        .run_ensemble(&obs, 16)
        .unwrap();
    for (i, &x) in exact.iter().enumerate().take(obs.len()) {
        let (m, e) = (single.means[i], single.batch_errors[i]);
        let ens = ensemble.estimates[i];
        assert!(((m - x) / e).abs() < 4.0, "single {i}: {m} +- {e} vs {x}");
        assert!(ens.z_score(x).abs() < 4.0, "ensemble {i}: {ens:?} vs {x}");
        assert!((m - ens.mean).abs() < 4.0 * e.hypot(ens.std_error));
    }
}
