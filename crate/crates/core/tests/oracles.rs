//! Library results against independent reference computations.

use std::sync::Arc;

use bd_core::equilibrium::CRITICAL_TOL;
use bd_core::experiments::{detect_threshold, ThresholdStatus};
use bd_core::solver::{uniform_grid, weak_form_residual};
use bd_core::tails::stretched_infimum;
use bd_core::{
    build_tail_comparison_matrix, check_domination, critical_values, integrate,
    make_power_law_model, relative_free_energy, solve_monomer_activity, tail_density,
    verify_sign_preservation, ClusterState, CoefficientModel, CriticalDensity, EquilibriumData,
    IntegrateOptions, Weight,
};
use nalgebra::{DMatrix, DVector};

fn flagship() -> CoefficientModel {
    make_power_law_model(0.5, 1.0, 1.0, 0.5).unwrap()
}

/// `ln Q_i` for `a_i = i^gamma`, `b_i = a_i (z_s + q i^(mu-1))`, written
/// out directly from the product formula.
fn log_q_power_law(gamma: f64, z_s: f64, q: f64, mu: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    for k in 1..n {
        let (x, y) = (k as f64, (k + 1) as f64);
        let step = gamma * x.ln() - gamma * y.ln() - (z_s + q * y.powf(mu - 1.0)).ln();
        out.push(out[k - 1] + step);
    }
    out
}

/// Newton iteration on `F(z) = sum_i i Q_i z^i = rho`.
fn newton_activity(log_q: &[f64], rho: f64, z0: f64) -> f64 {
    let mut z = z0;
    for _ in 0..100 {
        let (mut f, mut df) = (0.0, 0.0);
        for (k, lq) in log_q.iter().enumerate() {
            let i = (k + 1) as f64;
            let term = (lq + i * z.ln()).exp();
            f += i * term;
            df += i * i * term / z;
        }
        let step = (f - rho) / df;
        z -= step;
        if step.abs() < 1e-16 * z {
            break;
        }
    }
    z
}

#[test]
fn flagship_activity_matches_newton_oracle() {
    let lq = log_q_power_law(0.5, 1.0, 1.0, 0.5, 20_000);
    let oracle = newton_activity(&lq, 1.0, 0.3);
    let z = solve_monomer_activity(&flagship(), 1.0, 1e-14).unwrap();
    assert!((z - oracle).abs() < 1e-12, "{z} vs {oracle}");
    assert!((z - 0.5541532).abs() < 5e-8);
}

#[test]
fn flagship_critical_values() {
    // The scan estimate sees Q_(i+1)/Q_i approach 1/z_s with an i^(-1/2)
    // correction, so it is only accurate to a few parts in a million.
    let scan = critical_values(&flagship(), 1 << 17, CRITICAL_TOL).unwrap();
    assert!((scan.z_s - 1.0).abs() < 1e-5, "z_s = {}", scan.z_s);
    let eq = EquilibriumData::for_density(&flagship(), 1.0, 100, 1e-12).unwrap();
    assert_eq!(eq.z_s, 1.0);
    let cv = eq;
    // Q_i z_s^i ~ i^(-1/2) exp(-4 sqrt i): the series converges fast enough
    // for a direct partial-sum oracle.
    let lq = log_q_power_law(0.5, 1.0, 1.0, 0.5, 100_000);
    let direct: f64 = lq
        .iter()
        .enumerate()
        .map(|(k, l)| (k + 1) as f64 * l.exp())
        .sum();
    match cv.rho_s {
        CriticalDensity::Finite(v) => {
            assert!((v - direct).abs() < 1e-9 * direct, "{v} vs {direct}");
            assert!((v - 4.8779).abs() < 1e-4);
        }
        other => panic!("expected a finite critical density, got {other:?}"),
    }
}

#[test]
fn stretched_minimizer_is_the_first_index_up_to_a_million() {
    for (alpha, mu) in [(1.0, 0.5), (0.5, 0.3), (2.0, 0.25), (1.0, 0.9)] {
        let (j, v) = stretched_infimum(alpha, mu, 1_000_000);
        assert_eq!(j, 2, "alpha = {alpha}, mu = {mu}");
        let closed = (alpha * (1.0 - 2f64.powf(mu))).exp();
        assert!((v - closed).abs() < 1e-15);
    }
}

#[test]
fn tail_comparison_flow_matches_matrix_exponential() {
    let sys = build_tail_comparison_matrix(&flagship(), 0.6, 2, 30).unwrap();
    let n = sys.n();
    let dense = sys.to_dense();
    let t = 3.0;
    let u0: Vec<f64> = (0..n).map(|k| -1.0 / (1.0 + k as f64)).collect();
    let m = DMatrix::from_fn(n, n, |i, j| dense[i][j] * t);
    let exact = m.exp() * DVector::from_column_slice(&u0);
    let rep = verify_sign_preservation(&sys, &u0, t, None).unwrap();
    assert!(rep.holds);
    for (x, y) in exact.iter().zip(&rep.final_state) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn equilibrium_is_stationary_under_integration() {
    let m = flagship();
    let eq = EquilibriumData::for_density(&m, 1.0, 500, 1e-12).unwrap();
    let traj = integrate(
        &ClusterState::equilibrium(&eq).unwrap(),
        &m,
        10.0,
        &IntegrateOptions::default(),
    )
    .unwrap();
    let q_max = eq.profile.iter().copied().fold(0.0, f64::max);
    for s in &traj.snapshots {
        let d =
            s.c.iter()
                .zip(&eq.profile)
                .fold(0.0f64, |a, (c, q)| a.max((c - q).abs()));
        assert!(d <= 10.0 * 1e-8 * q_max);
    }
}

#[test]
fn tolerance_self_convergence_against_tight_reference() {
    let m = flagship();
    let s0 = ClusterState::monodisperse(400, 1.0).unwrap();
    let run = |tol: f64| {
        let o = IntegrateOptions {
            rel_tol: tol,
            ..Default::default()
        };
        integrate(&s0, &m, 20.0, &o).unwrap().last().c.clone()
    };
    let reference = run(1e-10);
    let scale = reference.iter().copied().fold(0.0, f64::max);
    let err = |c: &[f64]| {
        c.iter()
            .zip(&reference)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            / scale
    };
    let (e1, e2) = (err(&run(1e-6)), err(&run(5e-7)));
    assert!(e1 <= 100.0 * 1e-6, "relative state error {e1}");
    assert!(e2 <= 100.0 * 5e-7);
}

#[test]
fn free_energy_decreases_and_c1_settles() {
    let m = flagship();
    let eq = Arc::new(EquilibriumData::for_density(&m, 1.0, 600, 1e-12).unwrap());
    let o = IntegrateOptions {
        output_times: uniform_grid(0.0, 100.0, 200),
        equilibrium: Some(eq.clone()),
        ..Default::default()
    };
    let traj = integrate(
        &ClusterState::monodisperse(600, 1.0).unwrap(),
        &m,
        100.0,
        &o,
    )
    .unwrap();
    let h: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| s.free_energy.unwrap())
        .collect();
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 10.0 * 1e-8 * h[0].abs().max(1.0));
    }
    assert!((traj.last().c1 - eq.z_bar).abs() < 1e-6);
    assert!(traj.snapshots[1].c1 < traj.snapshots[0].c1);
    let h_end = relative_free_energy(&traj.last().c, &eq).unwrap();
    assert!(h_end.abs() < 1e-8);
}

#[test]
fn weak_form_residuals() {
    let m = flagship();
    let o = IntegrateOptions {
        rel_tol: 1e-10,
        output_times: uniform_grid(0.0, 4.0, 400),
        ..Default::default()
    };
    let traj = integrate(&ClusterState::monodisperse(300, 1.0).unwrap(), &m, 4.0, &o).unwrap();
    for idx in [10, 100, 300] {
        assert!(weak_form_residual(&traj, &m, &Weight::power(1.0), idx).unwrap() <= 1e-8);
        // centred differences at dt = 0.01 leave an O(dt^2) residual
        assert!(weak_form_residual(&traj, &m, &Weight::Unit, idx).unwrap() <= 1e-3);
    }
    let eq = EquilibriumData::for_density(&m, 1.0, 300, 1e-12).unwrap();
    let still = integrate(&ClusterState::equilibrium(&eq).unwrap(), &m, 1.0, &o).unwrap();
    assert!(weak_form_residual(&still, &m, &Weight::power(2.0), 5).unwrap() <= 1e-10);
}

#[test]
fn domination_examples() {
    let m = flagship();
    let o = IntegrateOptions {
        output_times: uniform_grid(0.0, 10.0, 20),
        ..Default::default()
    };
    let traj = integrate(&ClusterState::monodisperse(200, 1.0).unwrap(), &m, 10.0, &o).unwrap();
    let t_start = 5.0;
    let start = traj.snapshots.iter().find(|s| s.t == t_start).unwrap();
    let g = tail_density(&start.c).g;
    // r = G(t_start) + 1 with omega above sup c_1 after t_start
    let r: Vec<f64> = g.iter().map(|v| v + 1.0).collect();
    assert!(check_domination(&traj, &r, t_start, 1e-10).unwrap().holds());
    let mut broken = g.clone();
    broken[4] = g[4] / 2.0;
    let rep = check_domination(&traj, &broken, t_start, 1e-10).unwrap();
    let v = rep.first_violation.unwrap();
    assert_eq!((v.t, v.j), (t_start, 5));
}

#[test]
fn threshold_examples() {
    let m = flagship();
    let eq = Arc::new(EquilibriumData::for_density(&m, 1.0, 300, 1e-12).unwrap());
    let o = IntegrateOptions {
        output_times: uniform_grid(0.0, 20.0, 40),
        ..Default::default()
    };
    let still = integrate(&ClusterState::equilibrium(&eq).unwrap(), &m, 20.0, &o).unwrap();
    let th = detect_threshold(&still, eq.z_bar + 0.01);
    assert_eq!((th.status, th.t0), (ThresholdStatus::Found, Some(0.0)));
    let moving = integrate(&ClusterState::monodisperse(300, 1.0).unwrap(), &m, 20.0, &o).unwrap();
    let th = detect_threshold(&moving, eq.z_bar + 0.05 * (eq.z_s - eq.z_bar));
    assert_eq!(th.status, ThresholdStatus::Found);
    assert!(th.t0.unwrap() > 0.0);
    assert_eq!(
        detect_threshold(&moving, 0.9 * eq.z_bar).status,
        ThresholdStatus::NeverBelow
    );
}
