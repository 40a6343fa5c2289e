//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p bd-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use bd_core::experiments::{
    run_corpus, run_uniform_moment_experiment, ExperimentConfig, ExperimentOutcome,
};
use bd_core::solver::Positivity;
use bd_core::tails::{moment_sandwich, stretched_sandwich_check, tail_rhs};
use bd_core::{
    build_tail_comparison_matrix, integrate, make_power_law_model, net_rates,
    solve_monomer_activity, stretched_weights, tail_density, verify_sign_preservation,
    ClusterState, CoefficientModel, EquilibriumData, IntegrateOptions, MetzlerSystem,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn pass_if(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn flagship_model() -> CoefficientModel {
    make_power_law_model(0.5, 1.0, 1.0, 0.5).unwrap()
}

fn criterion_1() -> Outcome {
    let model = flagship_model();
    let start = Instant::now();
    let state = ClusterState::monodisperse(2000, 1.0).unwrap();
    let opts = IntegrateOptions {
        output_times: bd_core::solver::uniform_grid(0.0, 200.0, 400),
        ..Default::default()
    };
    let traj = match integrate(&state, &model, 200.0, &opts) {
        Ok(t) => t,
        Err(e) => return pass_if(false, format!("integration failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let drift = traj.max_mass_drift();
    pass_if(
        drift <= 1e-10 && secs <= 60.0,
        format!("max relative mass drift {drift:.3e}, runtime {secs:.1} s"),
    )
}

fn criterion_2() -> Outcome {
    let model = flagship_model();
    let eq = EquilibriumData::for_density(&model, 1.0, 2000, 1e-12).unwrap();
    let state = ClusterState::equilibrium(&eq).unwrap();
    let w = net_rates(&state, &model).unwrap().w;
    let scale = eq
        .profile
        .iter()
        .enumerate()
        .map(|(k, q)| model.a(k + 1) * eq.z_bar * q)
        .fold(0.0, f64::max);
    let w_max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let traj = integrate(&state, &model, 100.0, &IntegrateOptions::default());
    let Ok(traj) = traj else {
        return pass_if(false, "integration from equilibrium failed".into());
    };
    let q_max = eq.profile.iter().copied().fold(0.0, f64::max);
    let drift = traj
        .last()
        .c
        .iter()
        .zip(&eq.profile)
        .fold(0.0f64, |m, (c, q)| m.max((c - q).abs()));
    pass_if(
        w_max <= 1e-12 * scale && drift <= 1e-6 * q_max,
        format!(
            "max |W_i(Q)| / scale = {:.3e}, drift / max Q = {:.3e}",
            w_max / scale,
            drift / q_max
        ),
    )
}

fn criterion_3() -> Outcome {
    let model = CoefficientModel::from_fn(400_000, |_| 1.0, |_| 1.0, None).unwrap();
    // 2 z^2 - 5 z + 2 = 0, smaller root
    let oracle = (5.0 - (25.0f64 - 16.0).sqrt()) / 4.0;
    match solve_monomer_activity(&model, 2.0, 1e-14) {
        Ok(z) => pass_if(
            (z - oracle).abs() <= 1e-12,
            format!("z_bar = {z:.15}, error {:.2e}", (z - oracle).abs()),
        ),
        Err(e) => pass_if(false, format!("solve failed: {e}")),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(5..300);
    let r: f64 = rng.gen_range(0.2..0.95);
    (1..=n)
        .map(|i| {
            if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(0.0..2.0) * r.powi(i)
            }
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = [(1.0, 0.5), (0.5, 0.3), (2.0, 0.25)];
    let weights: Vec<_> = params
        .iter()
        .map(|&(a, m)| stretched_weights(a, m).unwrap())
        .collect();
    let mut failures = 0;
    let mut worst_recon = 0.0f64;
    for _ in 0..100 {
        let c = random_state(&mut rng);
        let g = tail_density(&c);
        let recon = g.reconstruct();
        let scale = c.iter().copied().fold(0.0, f64::max);
        let err = c
            .iter()
            .zip(&recon)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst_recon = worst_recon.max(err / scale.max(f64::MIN_POSITIVE));
        for k in [0.0, 1.0, 2.0, 3.0, 5.0] {
            failures += usize::from(!moment_sandwich(&c, k).holds());
        }
        for w in &weights {
            failures += usize::from(!stretched_sandwich_check(&c, w).holds());
        }
    }
    pass_if(
        failures == 0 && worst_recon <= 4.0 * f64::EPSILON,
        format!(
            "{failures} sandwich failures over 800 checks, reconstruction error {worst_recon:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let model = flagship_model();
    let state = ClusterState::monodisperse(2000, 1.0).unwrap();
    // Centred differences carry h^2 G'''/6 of truncation error and G_50
    // grows like t^49 early on, so h must be small.
    let h = 1e-4;
    let centers: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    let mut times = Vec::new();
    for &t in &centers {
        times.extend([t - h, t, t + h]);
    }
    let opts = IntegrateOptions {
        rel_tol: 1e-12,
        output_times: times,
        ..Default::default()
    };
    let traj = match integrate(&state, &model, 10.0 + h, &opts) {
        Ok(t) => t,
        Err(e) => return pass_if(false, format!("integration failed: {e}")),
    };
    let find = |t: f64| {
        traj.snapshots
            .iter()
            .find(|s| s.t == t)
            .expect("requested output")
    };
    let mut worst = 0.0f64;
    for &t in &centers {
        let (lo, mid, hi) = (find(t - h), find(t), find(t + h));
        let (gl, gm, gh) = (
            tail_density(&lo.c).g,
            tail_density(&mid.c).g,
            tail_density(&hi.c).g,
        );
        let rhs = tail_rhs(&gm, mid.c[0], &model);
        for j in 2..=50 {
            let fd = (gh[j - 1] - gl[j - 1]) / (2.0 * h);
            let exact = rhs[j - 2];
            worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
        }
    }
    pass_if(
        worst <= 1e-4,
        format!("worst relative error {worst:.2e} over 20 times, j = 2..=50"),
    )
}

/// `u(t)` for `u' = A u + f` through the exponential of the bordered matrix.
fn expm_oracle(a: &[Vec<f64>], f: &[f64], u0: &[f64], t: f64) -> Vec<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[i][j] * t;
        }
        m[(i, n)] = f[i] * t;
    }
    let mut x = DVector::zeros(n + 1);
    x.as_mut_slice()[..n].copy_from_slice(u0);
    x[n] = 1.0;
    let y = m.exp() * x;
    y.as_slice()[..n].to_vec()
}

fn random_metzler(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        rng.gen_range(-3.0..1.0)
                    } else if rng.gen_bool(0.7) {
                        rng.gen_range(0.0..2.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut sign_fail, mut oracle_fail, mut gronwall_fail) = (0, 0, 0);
    let mut worst_oracle = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let a = random_metzler(&mut rng, n);
        let sys = MetzlerSystem::dense(a.clone()).unwrap();
        let u0: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..1.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..0.5)).collect();
        let t_end = rng.gen_range(0.5..2.0);
        let rep = verify_sign_preservation(&sys, &u0, t_end, Some(&f)).unwrap();
        sign_fail += usize::from(!rep.holds);
        let exact = expm_oracle(&a, &f, &u0, t_end);
        let scale = exact.iter().chain(&u0).fold(0.0f64, |m, v| m.max(v.abs()));
        let err = exact
            .iter()
            .zip(&rep.final_state)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst_oracle = worst_oracle.max(err / scale);
        oracle_fail += usize::from(err > 1e-9 * scale);

        let mixed: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rep = verify_sign_preservation(&sys, &mixed, t_end, None).unwrap();
        gronwall_fail += usize::from(!rep.gronwall_holds(1e-8));
    }
    // the tridiagonal tail matrix is covered by the same machinery
    let tail = build_tail_comparison_matrix(&flagship_model(), 0.6, 2, 40).unwrap();
    let u0 = vec![-1.0; 39];
    let tail_ok = verify_sign_preservation(&tail, &u0, 5.0, None)
        .unwrap()
        .holds;
    pass_if(
        sign_fail + oracle_fail + gronwall_fail == 0 && tail_ok,
        format!(
            "sign failures {sign_fail}, oracle mismatches {oracle_fail} (worst {worst_oracle:.1e}), \
             Gronwall failures {gronwall_fail}, tail matrix ok: {tail_ok}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let results = run_corpus(7, 200);
    let failed: Vec<usize> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.case.index)
        .collect();
    pass_if(
        failed.is_empty(),
        format!(
            "{} of 200 cases passed; failing: {failed:?}",
            200 - failed.len()
        ),
    )
}

fn flagship_experiment(
    k: Vec<f64>,
    stretched: Vec<(f64, f64)>,
) -> (Result<ExperimentOutcome, String>, f64) {
    let mut cfg = ExperimentConfig::default();
    cfg.moments.k = k;
    cfg.moments.stretched = stretched;
    let start = Instant::now();
    let out = run_uniform_moment_experiment(&cfg).map_err(|e| e.to_string());
    (out, start.elapsed().as_secs_f64())
}

fn bound_line(outcome: &ExperimentOutcome) -> String {
    let r = &outcome.report;
    let bounds: Vec<String> = r
        .moment_bounds
        .iter()
        .map(|b| {
            format!(
                "{}: observed {:.4} <= certified {:.4}",
                b.weight, b.observed_sup, b.certified
            )
        })
        .collect();
    format!(
        "T0 = {:?}, failed stage {:?}, {}",
        r.t0,
        r.failed_stage,
        bounds.join(", ")
    )
}

fn criterion_8(run: &(Result<ExperimentOutcome, String>, f64)) -> Outcome {
    let (out, secs) = run;
    let Ok(out) = out else {
        return pass_if(
            false,
            format!("experiment error: {}", out.as_ref().unwrap_err()),
        );
    };
    let r = &out.report;
    let all_snapshots = r
        .moment_bounds
        .iter()
        .all(|b| b.observed_sup <= b.certified);
    pass_if(
        r.verdict && all_snapshots && *secs <= 120.0,
        format!(
            "verdict {}, {}, runtime {secs:.1} s",
            r.verdict,
            bound_line(out)
        ),
    )
}

fn criterion_9(run: &(Result<ExperimentOutcome, String>, f64)) -> Outcome {
    let (out, _) = run;
    let Ok(out) = out else {
        return pass_if(
            false,
            format!("experiment error: {}", out.as_ref().unwrap_err()),
        );
    };
    let r = &out.report;
    let all_snapshots = r
        .moment_bounds
        .iter()
        .all(|b| b.observed_sup <= b.certified);
    pass_if(
        r.verdict && all_snapshots,
        format!("verdict {}, {}", r.verdict, bound_line(out)),
    )
}

fn criterion_10(run: &(Result<ExperimentOutcome, String>, f64)) -> Outcome {
    let Ok(out) = &run.0 else {
        return pass_if(false, "flagship experiment failed".into());
    };
    let r = &out.report;
    match r.convergence {
        Some(c) => pass_if(
            c.final_distance < 1e-3 * r.rho,
            format!(
                "sum i |c_i - Q_i| = {:.3e} at t_end (from {:.3e}), eventually decreasing: {}",
                c.final_distance, c.initial_distance, c.eventually_decreasing
            ),
        ),
        None => pass_if(false, "no convergence data".into()),
    }
}

fn criterion_11() -> Outcome {
    // Fixed-step halving on the flagship model and data: e(h) = |y_h - y_(h/2)|.
    let model = flagship_model();
    let state = ClusterState::monodisperse(2000, 1.0).unwrap();
    let t_end = 2.0;
    let run = |h: f64| {
        let opts = IntegrateOptions {
            fixed_step: Some(h),
            positivity: Positivity::Unconstrained,
            ..Default::default()
        };
        integrate(&state, &model, t_end, &opts).map(|t| t.last().c.clone())
    };
    let hs = [t_end / 100.0, t_end / 200.0, t_end / 400.0];
    let sols: Result<Vec<_>, _> = hs.iter().map(|&h| run(h)).collect();
    let Ok(sols) = sols else {
        return pass_if(false, "fixed-step integration failed".into());
    };
    let diff = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let (e1, e2) = (diff(&sols[0], &sols[1]), diff(&sols[1], &sols[2]));
    let ratio = e1 / e2;
    pass_if(
        ratio >= 8.0,
        format!(
            "error ratio {ratio:.2} (observed order {:.2}) under step halving",
            ratio.log2()
        ),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: usize, name: &str, o: Outcome| {
        all &= o.passed;
        println!(
            "{} criterion {id:>2} ({name}): {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    report(1, "mass conservation", criterion_1());
    report(2, "detailed balance fixed point", criterion_2());
    report(3, "equilibrium solve", criterion_3());
    report(4, "tail transform identities", criterion_4());
    report(5, "tail dynamics", criterion_5());
    report(6, "maximum principle", criterion_6());
    report(7, "supersolution round trip", criterion_7());
    let algebraic = flagship_experiment(vec![2.0], Vec::new());
    report(8, "uniform moment propagation", criterion_8(&algebraic));
    let stretched = flagship_experiment(Vec::new(), vec![(1.0, 0.5)]);
    report(
        9,
        "stretched exponential propagation",
        criterion_9(&stretched),
    );
    report(10, "qualitative convergence", criterion_10(&algebraic));
    report(11, "integrator self-convergence", criterion_11());
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILURES present");
        ExitCode::FAILURE
    }
}
