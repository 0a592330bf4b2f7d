use nalgebra::Vector3;
use proptest::prelude::*;
use shield_core::builder::design;
use shield_core::simulator::*;
use shield_core::{ControlGains, FormationSpec, QuadricSurface};

fn sphere12() -> FormationSpec {
    design(&QuadricSurface::semi_sphere(15.0).unwrap(), 12, None).unwrap()
}

fn gains() -> ControlGains {
    ControlGains::new(0.1, 1000.0, 1e-3).with_barrier_eps(1e-4)
}

fn short_study() -> StudyConfig {
    StudyConfig {
        deltas: vec![2.0, 6.0],
        runs_per_delta: 3,
        sample_times: vec![1.0, 2.0],
        base_seed: 11,
        dt: DEFAULT_DT,
        t_end: 2.0,
        method: Method::default(),
    }
}

#[test]
fn same_seed_same_initial_state() {
    let spec = sphere12();
    let a = random_initial_conditions(&spec, 5.0, 3).unwrap();
    assert_eq!(a, random_initial_conditions(&spec, 5.0, 3).unwrap());
    assert_ne!(a, random_initial_conditions(&spec, 5.0, 4).unwrap());
}

#[test]
fn trajectory_descends_and_stays_above_plane() {
    let spec = sphere12();
    let p0 = random_initial_conditions(&spec, 6.0, 1).unwrap();
    let traj = integrate(&spec, &gains(), &p0, DEFAULT_DT, 5.0, Method::Rk4Imex).unwrap();
    assert!(traj.potential_monotone(1e-9), "rise {}", traj.max_potential_rise);
    assert!(traj.min_z > 0.0);
    let n = traj.len();
    assert_eq!(traj.states.len(), n);
    assert_eq!(traj.edge_error_norm.len(), n);
    assert_eq!(traj.surface_residual_norm.len(), n);
    assert_eq!(traj.potential.len(), n);
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    assert!((traj.times[n - 1] - 5.0).abs() < 1e-9);
    assert!(traj.edge_error_norm[n - 1] < 0.1 * traj.edge_error_norm[0]);
}

#[test]
fn explicit_methods_agree_when_barrier_is_idle() {
    let spec = design(&QuadricSurface::semi_sphere(1.0).unwrap().with_center(Vector3::new(0.0, 0.0, 0.8)), 12, None).unwrap();
    let g = ControlGains::new(1.0, 10.0, 1e-3).with_barrier_eps(0.05);
    let p0 = random_initial_conditions(&spec, 0.2, 5).unwrap();
    let a = integrate(&spec, &g, &p0, 1e-3, 0.5, Method::Rk4).unwrap();
    let b = integrate(&spec, &g, &p0, 1e-3, 0.5, Method::Rk4Imex).unwrap();
    let c = integrate(&spec, &g, &p0, 1e-4, 0.5, Method::Euler).unwrap();
    for ((x, y), z) in a.final_state().iter().zip(b.final_state()).zip(c.final_state()) {
        assert!((x - y).norm() < 1e-10);
        assert!((x - z).norm() < 1e-3);
    }
}

#[test]
fn reductions_follow_the_series() {
    let spec = sphere12();
    let p0 = random_initial_conditions(&spec, 4.0, 2).unwrap();
    let traj = integrate(&spec, &gains(), &p0, DEFAULT_DT, 3.0, Method::default()).unwrap();
    let conv = convergence_metrics(&traj).unwrap();
    let (re, rf) = conv.reduction_at(3.0).unwrap();
    assert!((re - (1.0 - traj.e_at(3.0).unwrap() / conv.metrics.initial_e)).abs() < 1e-15);
    assert!((rf - (1.0 - traj.fs_at(3.0).unwrap() / conv.metrics.initial_fs)).abs() < 1e-15);
    assert!(traj.e_at(3.5).is_err());
}

#[test]
fn study_rows_cover_every_delta_and_time() {
    let spec = sphere12();
    let cfg = short_study();
    let rows = statistical_study(&spec, &gains(), &cfg).unwrap();
    assert_eq!(rows.len(), 2 * 3);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row.delta, cfg.deltas[k / 3]);
        assert_eq!(row.t, [0.0, 1.0, 2.0][k % 3]);
        assert!(row.sd_e >= 0.0 && row.sd_fs >= 0.0);
    }
    assert!(rows[3].mean_e > rows[0].mean_e);
    assert_eq!(rows, statistical_study(&spec, &gains(), &cfg).unwrap());
}

#[test]
fn study_needs_two_runs() {
    let cfg = StudyConfig { runs_per_delta: 1, ..short_study() };
    assert!(statistical_study(&sphere12(), &gains(), &cfg).is_err());
}

#[test]
fn sample_sd_oracle() {
    let (m, s) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!(m, 5.0);
    assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
}

#[test]
fn csv_outputs_have_headers() {
    let spec = sphere12();
    let p0 = random_initial_conditions(&spec, 2.0, 0).unwrap();
    let traj = integrate(&spec, &gains(), &p0, DEFAULT_DT, 0.5, Method::default()).unwrap();
    let mut buf = Vec::new();
    write_metrics_csv(&traj, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), traj.len() + 1);

    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), traj.len() * 12 + 1);

    let rows = statistical_study(&spec, &gains(), &short_study()).unwrap();
    let mut buf = Vec::new();
    write_stats_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "delta,t,mean_e,sd_e,mean_fs,sd_fs");
    assert_eq!(text.lines().count(), rows.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn initial_conditions_respect_both_bounds(delta in 0.5..10.0f64, seed in 0u64..10_000) {
        let spec = design(&QuadricSurface::semi_ellipsoid(10.0, 15.0, 12.0).unwrap(), 50, None).unwrap();
        let s = spec.surface().unwrap();
        let p = random_initial_conditions(&spec, delta, seed).unwrap();
        let floor = (0.05 * s.h_max()).min(0.5 * delta);
        for e in &spec.edges {
            prop_assert!(((p[e.i] - p[e.j]).norm() - e.target).abs() <= delta);
        }
        for q in &p {
            prop_assert!(s.residual(q).abs() <= s.q1_norm() * delta);
            prop_assert!(q.z >= floor);
        }
    }
}
