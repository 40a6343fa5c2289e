//! The uniform moment bound experiment, stage by stage.

use std::sync::Arc;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::{
    ConvergenceSummary, MomentBound, ShortTimeCheck, Stage, ThresholdStatus, UniformBoundReport,
};
use crate::coefficients::CoefficientModel;
use crate::equilibrium::{CriticalDensity, EquilibriumData, CRITICAL_TOL};
use crate::error::{Error, Result};
use crate::maximum_principle::check_domination;
use crate::solver::{integrate, uniform_grid, IntegrateOptions, Trajectory};
use crate::supersolution::{
    build_supersolution, verify_supersolution, weighted_sum_bound, Supersolution,
    SupersolutionParams, SupersolutionVerdict,
};
use crate::tails::{stretched_weights, tail_density};
use crate::weights::Weight;

/// Constants of the short-time exponential moment bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShortTimeConstant {
    /// `inf_i (phi_(i+1) - phi_i) / phi_1`.
    pub epsilon: f64,
    /// `sup_i a_i (phi_(i+1) - phi_i) / phi_i`.
    pub a_phi: f64,
    pub b_bar: f64,
    /// `(rho + b_bar / epsilon) A_phi`.
    pub c_phi: f64,
}

/// `C_phi = (rho + b_bar / epsilon) A_phi`, with `epsilon` and `A_phi`
/// scanned over `1..n`. `A_phi` is declared unbounded when
/// `a_i (phi_(i+1) - phi_i) / phi_i` still grows over the last doubling of
/// the scan (log-log slope above 0.01).
pub fn short_time_constant(
    model: &CoefficientModel,
    phi: &Weight,
    rho: f64,
    n: usize,
) -> Result<ShortTimeConstant> {
    if n < 4 {
        return Err(Error::InvalidInput("scan needs at least four sizes".into()));
    }
    model.ensure_range(n)?;
    let ln_phi1 = phi.ln_at(1);
    let mut epsilon = f64::INFINITY;
    let mut a_phi = 0.0f64;
    let growth = |i: usize| model.a(i) * phi.relative_increment(i);
    for i in 1..n {
        let (lo, hi) = (phi.at(i), phi.at(i + 1));
        let inc = if hi.is_finite() {
            (hi - lo) / phi.at(1)
        } else {
            // (phi_i / phi_1) (phi_(i+1) / phi_i - 1), stable past overflow
            (phi.ln_at(i) - ln_phi1).exp() * phi.relative_increment(i)
        };
        epsilon = epsilon.min(inc);
        a_phi = a_phi.max(growth(i));
    }
    if !(epsilon > 0.0) {
        return Err(Error::NonIncreasingWeight { epsilon });
    }
    let (hi, lo) = (growth(n - 1), growth((n - 1) / 2));
    let slope = (hi / lo).ln() / ((n - 1) as f64 / ((n - 1) / 2) as f64).ln();
    if !a_phi.is_finite() || slope > 0.01 {
        return Err(Error::UnboundedGrowthConstant { slope });
    }
    let b_bar = model.meta().b_bar;
    Ok(ShortTimeConstant {
        epsilon,
        a_phi,
        b_bar,
        c_phi: (rho + b_bar / epsilon) * a_phi,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub status: ThresholdStatus,
    pub t0: Option<f64>,
    pub index: Option<usize>,
}

/// Earliest snapshot from which `c_1 < omega` at every later snapshot.
///
/// A threshold in the last tenth of the horizon is flagged inconclusive.
pub fn detect_threshold(trajectory: &Trajectory, omega: f64) -> Threshold {
    let snaps = &trajectory.snapshots;
    let mut index = None;
    for (k, s) in snaps.iter().enumerate().rev() {
        if s.c1 < omega {
            index = Some(k);
        } else {
            break;
        }
    }
    let Some(k) = index else {
        return Threshold {
            status: ThresholdStatus::NeverBelow,
            t0: None,
            index: None,
        };
    };
    let (t_first, t_last) = (snaps[0].t, snaps[snaps.len() - 1].t);
    let t0 = snaps[k].t;
    let late = snaps.len() > 1 && t0 - t_first > 0.9 * (t_last - t_first);
    Threshold {
        status: if late {
            ThresholdStatus::Inconclusive
        } else {
            ThresholdStatus::Found
        },
        t0: Some(t0),
        index: Some(k),
    }
}

/// Everything produced by one experiment run.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: UniformBoundReport,
    pub trajectory: Option<Trajectory>,
    pub supersolution: Option<Supersolution>,
    pub equilibrium: Arc<EquilibriumData>,
}

/// Checked setup shared by the experiment and the CLI helpers.
pub struct Setup {
    pub model: CoefficientModel,
    pub equilibrium: Arc<EquilibriumData>,
    pub rho: f64,
    pub omega: f64,
    pub initial: crate::solver::ClusterState,
}

/// Build the model, solve the equilibrium for the initial density and
/// resolve `omega`. Refuses supercritical densities.
pub fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let model = config.build_model()?;
    let n = config.run.n;
    model.ensure_range(n)?;
    let rho = match config.initial.rho() {
        Some(r) => r,
        None => config.initial.build(n, None)?.density(),
    };
    let equilibrium = Arc::new(EquilibriumData::for_density(&model, rho, n, CRITICAL_TOL)?);
    let initial = config.initial.build(n, Some(&equilibrium))?;
    let omega = config.omega.resolve(equilibrium.z_bar, equilibrium.z_s)?;
    Ok(Setup {
        model,
        equilibrium,
        rho,
        omega,
        initial,
    })
}

fn check_moment_orders(config: &ExperimentConfig, gamma: f64) -> Result<()> {
    let k_min = (2.0 - gamma).max(1.0 + gamma);
    if let Some(k) = config.moments.k.iter().find(|&&k| k < k_min) {
        return Err(Error::Config(format!(
            "moment order k = {k} is below max(2 - gamma, 1 + gamma) = {k_min}, \
             the range where uniform propagation of algebraic moments is established"
        )));
    }
    if !config.moments.stretched.is_empty() {
        if !(gamma < 1.0) {
            return Err(Error::Config(
                "stretched exponential moments need the power-law growth branch (gamma < 1)".into(),
            ));
        }
        if let Some(&(_, mu)) = config
            .moments
            .stretched
            .iter()
            .find(|&&(_, mu)| mu > 1.0 - gamma)
        {
            return Err(Error::Config(format!(
                "stretched exponent mu = {mu} exceeds 1 - gamma = {}",
                1.0 - gamma
            )));
        }
    }
    Ok(())
}

/// Build a supersolution dominating `g` and verify it.
pub fn supersolution_for_profile(
    model: &CoefficientModel,
    z_s: f64,
    omega: f64,
    rho: f64,
    delta: f64,
    tol_tail: f64,
    g: &[f64],
) -> Result<(Supersolution, SupersolutionVerdict)> {
    let mut params = SupersolutionParams::new(model, z_s, omega, rho, delta, g.len())?;
    params.tol_tail = tol_tail;
    let sup = build_supersolution(model, &params, g)?;
    let verdict = verify_supersolution(&sup.r, model, omega, rho, 1e-12 * rho)?;
    Ok((sup, verdict))
}

/// Integrate, locate the threshold, and certify uniform bounds for every
/// requested moment. Configuration and setup problems are returned as
/// errors; failures of the checks themselves are recorded in the report.
pub fn run_uniform_moment_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let setup = prepare(config)?;
    let Setup {
        model,
        equilibrium,
        rho,
        omega,
        initial,
    } = setup;
    check_moment_orders(config, model.meta().gamma)?;
    let n = config.run.n;

    let mut report = UniformBoundReport::new(config, &equilibrium, rho, omega);
    report.stage(
        Stage::Setup,
        true,
        "model built; density is subcritical".into(),
    );

    // Stage: integrate.
    let opts = IntegrateOptions {
        rel_tol: config.run.rel_tol,
        abs_tol: config.run.abs_tol,
        output_times: uniform_grid(0.0, config.run.t_end, config.run.outputs),
        tail_threshold: config.run.tail_threshold,
        moments: config.moments.k.clone(),
        stretched: config.moments.stretched.clone(),
        equilibrium: Some(equilibrium.clone()),
        error_weight: heaviest_weight(config),
        ..Default::default()
    };
    let trajectory = match integrate(&initial, &model, config.run.t_end, &opts) {
        Ok(t) => t,
        Err(e) => {
            report.stage(Stage::Integrate, false, e.to_string());
            return Ok(report.finish(None, None, equilibrium));
        }
    };
    report.mass_drift = trajectory.max_mass_drift();
    report.warnings.extend(trajectory.warnings.iter().cloned());
    report.integration = Some(trajectory.stats.clone());
    report.convergence = Some(convergence_summary(&trajectory, &equilibrium));
    report.stage(
        Stage::Integrate,
        true,
        format!(
            "{} snapshots, max relative mass drift {:e}",
            trajectory.snapshots.len(),
            report.mass_drift
        ),
    );

    // Stage: threshold.
    let threshold = detect_threshold(&trajectory, omega);
    report.threshold = threshold.status;
    report.t0 = threshold.t0;
    let (Some(t0), Some(k0)) = (threshold.t0, threshold.index) else {
        report.stage(
            Stage::Threshold,
            false,
            format!("c_1 never stays below omega = {omega}"),
        );
        return Ok(report.finish(Some(trajectory), None, equilibrium));
    };
    let found = threshold.status == ThresholdStatus::Found;
    report.stage(
        Stage::Threshold,
        found,
        format!(
            "c_1 < omega for all snapshots from t = {t0} ({:?})",
            threshold.status
        ),
    );
    if !found {
        return Ok(report.finish(Some(trajectory), None, equilibrium));
    }

    // Stage: short-time bound on [0, T0].
    let mut weights: Vec<(String, Weight)> = config
        .moments
        .k
        .iter()
        .map(|&k| (format!("M_{k}"), Weight::power(k)))
        .collect();
    weights.extend(
        config
            .moments
            .stretched
            .iter()
            .map(|&(a, m)| (format!("E_{a}_{m}"), Weight::stretched(a, m))),
    );
    let mut short_ok = true;
    let mut short_msgs = Vec::new();
    for (col, (label, phi)) in weights.iter().enumerate() {
        match short_time_constant(&model, phi, rho, n) {
            Ok(stc) => {
                let series = |s: &crate::solver::Snapshot| {
                    if col < config.moments.k.len() {
                        s.moments[col]
                    } else {
                        s.stretched[col - config.moments.k.len()]
                    }
                };
                let m0 = series(&trajectory.snapshots[0]);
                let worst = trajectory.snapshots[..=k0]
                    .iter()
                    .map(|s| series(s) / ((stc.c_phi * s.t).exp() * m0))
                    .fold(0.0, f64::max);
                let passed = worst <= 1.0 + 1e-8;
                short_ok &= passed;
                report.short_time.push(ShortTimeCheck {
                    weight: label.clone(),
                    constant: stc,
                    worst_ratio: worst,
                    passed,
                });
            }
            Err(e) => {
                short_ok = false;
                short_msgs.push(format!("{label}: {e}"));
            }
        }
    }
    report.stage(
        Stage::ShortTimeBound,
        short_ok,
        if short_msgs.is_empty() {
            format!("exponential growth bound checked on [0, {t0}]")
        } else {
            short_msgs.join("; ")
        },
    );
    if !short_ok {
        return Ok(report.finish(Some(trajectory), None, equilibrium));
    }

    // Stage: supersolution from G(T0).
    let g = tail_density(&trajectory.snapshots[k0].c).g;
    let built = supersolution_for_profile(
        &model,
        equilibrium.z_s,
        omega,
        rho,
        config.supersolution.delta,
        config.supersolution.tol_tail,
        &g,
    );
    let (sup, verdict) = match built {
        Ok(v) => v,
        Err(e) => {
            report.stage(Stage::Supersolution, false, e.to_string());
            return Ok(report.finish(Some(trajectory), None, equilibrium));
        }
    };
    let dominates_g = sup.r.iter().zip(&g).all(|(r, g)| r >= g);
    let sup_ok = verdict.holds && dominates_g;
    report.supersolution = Some(sup.witness());
    report.supersolution_verdict = Some(verdict.clone());
    report.stage(
        Stage::Supersolution,
        sup_ok,
        format!(
            "lambda = {}, switch index {}, worst ratio {:e} at j = {}, dominates G(T0): {dominates_g}",
            sup.params.lambda, sup.n_switch_used, verdict.worst_ratio, verdict.worst_index
        ),
    );
    if !sup_ok {
        return Ok(report.finish(Some(trajectory), Some(sup), equilibrium));
    }

    // Stage: domination for t >= T0.
    let tol_dom = 1e-10 * rho;
    let dom = check_domination(&trajectory, &sup.r, t0, tol_dom)?;
    let dom_ok = dom.holds();
    report.stage(
        Stage::Domination,
        dom_ok,
        format!(
            "max_j (G_j - r_j) = {:e} over {} snapshots",
            dom.max_gap, dom.snapshots_checked
        ),
    );
    report.domination = Some(dom);
    if !dom_ok {
        return Ok(report.finish(Some(trajectory), Some(sup), equilibrium));
    }

    // Stage: certified bounds.
    let mut cert_ok = true;
    let mut cert_msgs = Vec::new();
    for (col, &k) in config.moments.k.iter().enumerate() {
        let bound = weighted_sum_bound(&sup, &g, &Weight::power(k - 1.0));
        let observed = trajectory.snapshots.iter().map(|s| s.moments[col]);
        match bound {
            Ok(b) => {
                let certified = (k + 1.0) * b.lhs;
                let mb =
                    MomentBound::new(format!("M_{k}"), certified, &trajectory, k0, observed, b);
                cert_ok &= mb.passed;
                report.moment_bounds.push(mb);
            }
            Err(e) => {
                cert_ok = false;
                cert_msgs.push(format!("M_{k}: {e}"));
            }
        }
    }
    for (col, &(alpha, mu)) in config.moments.stretched.iter().enumerate() {
        let sw = stretched_weights(alpha, mu)?;
        let bound = weighted_sum_bound(&sup, &g, &sw.weight());
        let observed = trajectory.snapshots.iter().map(|s| s.stretched[col]);
        match bound {
            Ok(b) => {
                let certified = sw.eta2 * b.lhs;
                let label = format!("E_{alpha}_{mu}");
                let mut mb = MomentBound::new(label, certified, &trajectory, k0, observed, b);
                mb.regime = Some(if mu < 1.0 - model.meta().gamma {
                    "open".to_string()
                } else {
                    "boundary".to_string()
                });
                cert_ok &= mb.passed;
                report.moment_bounds.push(mb);
            }
            Err(e) => {
                cert_ok = false;
                cert_msgs.push(format!("E_{alpha}_{mu}: {e}"));
            }
        }
    }
    report.stage(
        Stage::CertifiedBound,
        cert_ok,
        if cert_msgs.is_empty() {
            "observed moments after T0 stay below the certified bounds".into()
        } else {
            cert_msgs.join("; ")
        },
    );
    Ok(report.finish(Some(trajectory), Some(sup), equilibrium))
}

/// The fastest-growing requested weight: any stretched exponential beats
/// every power.
fn heaviest_weight(config: &ExperimentConfig) -> Option<Weight> {
    let stretched = config.moments.stretched.iter().copied().max_by(|x, y| {
        (x.1, x.0)
            .partial_cmp(&(y.1, y.0))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if let Some((alpha, mu)) = stretched {
        return Some(Weight::stretched(alpha, mu));
    }
    config
        .moments
        .k
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, k| Some(m.map_or(k, |m| m.max(k))))
        .map(Weight::power)
}

/// `sum_i i |c_i(t) - Q_i|` along the trajectory.
pub fn equilibrium_distance(c: &[f64], equilibrium: &EquilibriumData) -> f64 {
    crate::numeric::compensated_sum(
        c.iter()
            .zip(&equilibrium.profile)
            .enumerate()
            .map(|(k, (x, q))| (k + 1) as f64 * (x - q).abs()),
    )
}

fn convergence_summary(
    trajectory: &Trajectory,
    equilibrium: &EquilibriumData,
) -> ConvergenceSummary {
    let d: Vec<f64> = trajectory
        .snapshots
        .iter()
        .map(|s| equilibrium_distance(&s.c, equilibrium))
        .collect();
    // Eventually decreasing: non-increasing (up to round-off) over the last half.
    let half = d.len() / 2;
    let eventually_decreasing = d[half..]
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-6) + 1e-12 * equilibrium.rho);
    ConvergenceSummary {
        initial_distance: d[0],
        final_distance: *d.last().unwrap_or(&f64::NAN),
        eventually_decreasing,
    }
}

/// `rho_s` as a plain number for reports (`inf` when divergent).
pub(crate) fn rho_s_value(rho_s: CriticalDensity) -> f64 {
    match rho_s {
        CriticalDensity::Finite(v) => v,
        CriticalDensity::Divergent => f64::INFINITY,
        CriticalDensity::Inconclusive(v) => v,
    }
}

/// Run independent configurations on a pool of `workers` threads; results
/// keep the input order.
pub fn run_sweep(
    configs: &[ExperimentConfig],
    workers: usize,
) -> Result<Vec<Result<ExperimentOutcome>>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(run_uniform_moment_experiment)
            .collect()
    }))
}
