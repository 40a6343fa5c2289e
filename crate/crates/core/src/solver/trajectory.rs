use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::integrator::{dopri5, IntegrationStats, Positivity, StepperOptions};
use super::{density, BeckerDoringSystem, ClusterState};
use crate::coefficients::CoefficientModel;
use crate::equilibrium::{relative_free_energy, EquilibriumData};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::weights::Weight;

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub rel_tol: f64,
    /// Absolute tolerance; `1e-14 * rho` when unset.
    pub abs_tol: Option<f64>,
    /// Snapshot times. Empty means the initial and final time only.
    pub output_times: Vec<f64>,
    /// Warn once `c_N > tail_threshold * rho / N`.
    pub tail_threshold: f64,
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
    pub positivity: Positivity,
    /// Orders `k` of the moments recorded in every snapshot.
    pub moments: Vec<f64>,
    /// `(alpha, mu)` pairs of recorded stretched exponential moments.
    pub stretched: Vec<(f64, f64)>,
    /// Reference equilibrium for the relative free energy.
    pub equilibrium: Option<Arc<EquilibriumData>>,
    /// Control the local error in the `phi`-weighted norm: component `i`
    /// gets absolute tolerance `abs_tol phi_1 / phi_i`. Keeps heavy
    /// moments such as `sum exp(alpha i^mu) c_i` free of tolerance-level
    /// noise in sparsely populated large sizes.
    pub error_weight: Option<Weight>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: None,
            output_times: Vec::new(),
            tail_threshold: 1e-6,
            fixed_step: None,
            max_steps: 10_000_000,
            positivity: Positivity::DensityPreservingClamp,
            moments: Vec::new(),
            stretched: Vec::new(),
            equilibrium: None,
            error_weight: None,
        }
    }
}

/// `count + 1` equally spaced times from `t0` to `t_end`.
pub fn uniform_grid(t0: f64, t_end: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count)
        .map(|k| {
            if k == count {
                t_end
            } else {
                t0 + (t_end - t0) * k as f64 / count as f64
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub t: f64,
    #[serde(skip)]
    pub c: Vec<f64>,
    pub rho: f64,
    pub c1: f64,
    pub moments: Vec<f64>,
    pub stretched: Vec<f64>,
    pub free_energy: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub moment_orders: Vec<f64>,
    pub stretched_params: Vec<(f64, f64)>,
    pub stats: IntegrationStats,
    pub warnings: Vec<String>,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectories hold at least one snapshot")
    }

    /// `max_t |rho(t) - rho(0)| / rho(0)`.
    pub fn max_mass_drift(&self) -> f64 {
        let rho0 = self.snapshots[0].rho;
        self.snapshots
            .iter()
            .map(|s| (s.rho - rho0).abs() / rho0)
            .fold(0.0, f64::max)
    }

    /// Time series CSV with `#key=value` header lines.
    pub fn to_csv(&self, header: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in header {
            let _ = writeln!(out, "#{k}={v}");
        }
        let _ = writeln!(out, "#rel_tol={:e}", self.rel_tol);
        let _ = writeln!(out, "#abs_tol={:e}", self.abs_tol);
        out.push_str("t,c1,rho,H");
        for k in &self.moment_orders {
            let _ = write!(out, ",M_{k}");
        }
        for (a, m) in &self.stretched_params {
            let _ = write!(out, ",E_{a}_{m}");
        }
        out.push('\n');
        for s in &self.snapshots {
            let h = s
                .free_energy
                .map_or_else(|| "nan".to_string(), |h| format!("{h:.16e}"));
            let _ = write!(out, "{:.16e},{:.16e},{:.16e},{}", s.t, s.c1, s.rho, h);
            for v in s.moments.iter().chain(&s.stretched) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, header: &[(String, String)]) -> Result<()> {
        std::fs::write(path, self.to_csv(header)).map_err(|e| Error::io(path, e))
    }

    /// One `state_t<t>.csv` file per snapshot with columns `i,c_i`.
    pub fn write_state_dumps(&self, dir: &Path) -> Result<()> {
        for s in &self.snapshots {
            let path = dir.join(format!("state_t{}.csv", s.t));
            let mut body = String::from("i,c_i\n");
            for (k, v) in s.c.iter().enumerate() {
                let _ = writeln!(body, "{},{v:.16e}", k + 1);
            }
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn summarize(t: f64, c: &[f64], opts: &IntegrateOptions) -> Result<Snapshot> {
    let free_energy = match &opts.equilibrium {
        Some(eq) => Some(relative_free_energy(c, eq)?),
        None => None,
    };
    Ok(Snapshot {
        t,
        c: c.to_vec(),
        rho: density(c),
        c1: c[0],
        moments: opts
            .moments
            .iter()
            .map(|&k| Weight::power(k).weighted_sum(c))
            .collect(),
        stretched: opts
            .stretched
            .iter()
            .map(|&(a, m)| Weight::stretched(a, m).weighted_sum(c))
            .collect(),
        free_energy,
    })
}

/// Integrate the truncated system from `state0` up to `t_end`.
pub fn integrate(
    state0: &ClusterState,
    model: &CoefficientModel,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let n = state0.len();
    let sys = BeckerDoringSystem::new(model, n)?;
    let rho = state0.density();
    if !(t_end >= state0.t) {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} precedes the initial time {}",
            state0.t
        )));
    }
    if let Some(eq) = &opts.equilibrium {
        if eq.len() != n {
            return Err(Error::InvalidInput(format!(
                "equilibrium has {} sizes, state {n}",
                eq.len()
            )));
        }
    }
    let abs_tol = opts.abs_tol.unwrap_or(1e-14 * rho.max(f64::MIN_POSITIVE));
    let mut times: Vec<f64> = opts
        .output_times
        .iter()
        .copied()
        .filter(|&t| t >= state0.t && t <= t_end)
        .collect();
    if times.first() != Some(&state0.t) {
        times.insert(0, state0.t);
    }
    if times.last() != Some(&t_end) {
        times.push(t_end);
    }
    times.dedup();

    let stepper = StepperOptions {
        rel_tol: opts.rel_tol,
        abs_tol,
        abs_tol_scale: opts.error_weight.map(|w| {
            let ln1 = w.ln_at(1);
            (1..=n).map(|i| (ln1 - w.ln_at(i)).exp().min(1.0)).collect()
        }),
        fixed_step: opts.fixed_step,
        initial_step: None,
        max_steps: opts.max_steps,
        positivity: opts.positivity,
    };
    let tail_limit = opts.tail_threshold * rho / n as f64;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut warnings = Vec::new();
    let (_, stats) = dopri5(&sys, state0.t, &state0.c, &times, &stepper, |t, c| {
        if c[n - 1] > tail_limit && warnings.is_empty() {
            let msg = format!(
                "tail overflow at t = {t}: c_N = {:e} exceeds {:e}; the truncation N = {n} may be too small",
                c[n - 1], tail_limit
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        snapshots.push(summarize(t, c, opts)?);
        Ok(())
    })?;
    if stats.clamped_density > 0.0 {
        log::info!(
            "negative clamping moved a density of {:e} into monomers",
            stats.clamped_density
        );
    }
    Ok(Trajectory {
        snapshots,
        moment_orders: opts.moments.clone(),
        stretched_params: opts.stretched.clone(),
        stats,
        warnings,
        rel_tol: opts.rel_tol,
        abs_tol,
    })
}

/// Mismatch in the weak formulation at snapshot `index`:
/// `|d/dt sum phi_i c_i - sum W_i (phi_(i+1) - phi_i - phi_1)|`, with the
/// derivative taken as a centred difference over the neighbouring snapshots.
pub fn weak_form_residual(
    trajectory: &Trajectory,
    model: &CoefficientModel,
    phi: &Weight,
    index: usize,
) -> Result<f64> {
    let snaps = &trajectory.snapshots;
    if index == 0 || index + 1 >= snaps.len() {
        return Err(Error::InvalidInput(format!(
            "snapshot {index} has no neighbour on both sides"
        )));
    }
    let (prev, cur, next) = (&snaps[index - 1], &snaps[index], &snaps[index + 1]);
    let lhs = (phi.weighted_sum(&next.c) - phi.weighted_sum(&prev.c)) / (next.t - prev.t);
    let state = ClusterState {
        c: cur.c.clone(),
        t: cur.t,
    };
    let w = super::net_rates(&state, model)?.w;
    let phi1 = phi.at(1);
    let mut acc = CompensatedSum::new();
    for (k, &wi) in w.iter().enumerate() {
        if wi != 0.0 {
            let i = k + 1;
            acc.add(wi * (phi.at(i + 1) - phi.at(i) - phi1));
        }
    }
    Ok((lhs - acc.value()).abs())
}
