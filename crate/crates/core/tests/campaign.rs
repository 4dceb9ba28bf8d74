use bathchain::analysis::SizeRange;
use bathchain::campaign::{
    load_groups, load_summaries, run_campaign, verify, verify_pair, Campaign, GradientMethod,
    PointStatus, ScanAxis,
};
use bathchain::mcwf::TrajectoryConfig;
use bathchain::model::SystemSpec;

fn config() -> TrajectoryConfig {
    TrajectoryConfig {
        t0: 2000.0,
        t_total: 20_000,
        ..Default::default()
    }
}

#[test]
fn verify_agrees_for_matching_specs() {
    let r = verify(&SystemSpec::chain(2, 1.0), &config(), 16).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert!(!r.mismatch, "{r:?}");
}

#[test]
fn verify_flags_wrong_spec() {
    let exact = SystemSpec::chain(2, 1.0);
    let sampled = SystemSpec {
        beta_right: exact.beta_left,
        ..exact.clone()
    };
    let r = verify_pair(&exact, &sampled, &config(), 16).unwrap();
    assert!(r.mismatch, "{r:?}");
    let current = r.rows.iter().find(|row| row.observable == "J1,2").unwrap();
    assert!(current.z < -4.0);
}

#[test]
fn verify_at_equilibrium_sees_no_current() {
    let spec = SystemSpec {
        beta_right: 0.5,
        ..SystemSpec::chain(3, 1.0)
    };
    let r = verify(&spec, &config(), 16).unwrap();
    assert!(!r.mismatch, "{r:?}");
    for row in r.rows.iter().filter(|row| row.observable.starts_with('J')) {
        assert!(row.exact.abs() < 1e-10);
    }
}

#[test]
fn verify_rejects_large_systems() {
    assert!(verify(&SystemSpec::chain(5, 1.0), &config(), 4)
        .unwrap_err()
        .is_validation());
    assert!(verify(&SystemSpec::ladder(3, 0.01), &config(), 4)
        .unwrap_err()
        .is_validation());
}

#[test]
fn lambda_scan_groups_by_value() {
    let dir = tempfile::tempdir().unwrap();
    let c = Campaign {
        base: SystemSpec::chain(2, 1.0),
        axis: ScanAxis::Lambda,
        values: vec![0.01, 0.02],
        sizes: Some(vec![2, 3, 4]),
        config: TrajectoryConfig {
            t0: 500.0,
            t_total: 2000,
            ..Default::default()
        },
        realizations: 2,
        output: dir.path().to_path_buf(),
        fit_range: SizeRange::default(),
        sigmas: 3.0,
        gradient_method: GradientMethod::Auto,
    };
    let m = run_campaign(&c, 1).unwrap();
    assert_eq!(m.points.len(), 6);
    assert!(m
        .points
        .iter()
        .all(|p| matches!(p.status, PointStatus::Completed { .. })));
    let groups = load_groups(&c).unwrap();
    assert_eq!(
        groups
            .iter()
            .map(|(l, g)| (l.as_str(), g.len()))
            .collect::<Vec<_>>(),
        [("lambda=0.01", 3), ("lambda=0.02", 3)]
    );
    let summaries = load_summaries(&c).unwrap();
    assert_eq!(summaries.len(), 2);
    assert!(summaries
        .iter()
        .all(|(_, s)| s.extrapolation.current_infinite.error > 0.0));

    // a shorter list reuses the stored points
    let subset = Campaign {
        values: vec![0.02],
        ..c.clone()
    };
    let m = run_campaign(&subset, 1).unwrap();
    assert!(m.points.iter().all(|p| p.status == PointStatus::Resumed));
}
