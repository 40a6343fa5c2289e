//! Dormand-Prince 5(4) integrator with PI step-size control and the
//! standard fourth-order continuous extension for dense output.

use serde::Serialize;

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// What to do with negative components.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Positivity {
    /// Leave signs alone (comparison systems live in the negative orthant).
    Unconstrained,
    /// Reject steps with components below `-abs_tol`; clamp smaller
    /// negatives to zero and remove the clamped density `sum_i i |y_i|`
    /// from the first component so that `sum_i i y_i` is unchanged.
    DensityPreservingClamp,
}

#[derive(Clone, Debug)]
pub struct StepperOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Per-component factors on `abs_tol` in the error norm, so that error
    /// is controlled in a weighted norm (`abs_tol_i = abs_tol * scale_i`).
    pub abs_tol_scale: Option<Vec<f64>>,
    /// Constant step; disables error control (used for convergence studies).
    pub fixed_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    pub positivity: Positivity,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            abs_tol_scale: None,
            fixed_step: None,
            initial_step: None,
            max_steps: 10_000_000,
            positivity: Positivity::Unconstrained,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Rejections caused by components below `-abs_tol`.
    pub negativity_rejections: usize,
    pub rhs_evaluations: usize,
    /// Total density moved into the first component by clamping.
    pub clamped_density: f64,
    pub min_step: f64,
    pub max_step: f64,
}

// Dormand-Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients: fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller (Hairer & Wanner's choice).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Workspace {
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    cont: [Vec<f64>; 5],
}

impl Workspace {
    fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        Self {
            k: [v(), v(), v(), v(), v(), v(), v()],
            y_stage: v(),
            y_new: v(),
            err: v(),
            cont: [v(), v(), v(), v(), v()],
        }
    }
}

fn weighted_rms(err: &[f64], y0: &[f64], y1: &[f64], opts: &StepperOptions) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .enumerate()
        .map(|(i, (e, (a, b)))| {
            let atol = opts
                .abs_tol_scale
                .as_ref()
                .map_or(opts.abs_tol, |w| opts.abs_tol * w[i]);
            let sc = atol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (s / n).sqrt()
}

/// Clamp negative entries (sizes `i >= 2`) to zero, compensating in `y[0]`.
/// Returns the density moved.
pub(crate) fn clamp_preserving_density(y: &mut [f64]) -> f64 {
    let mut moved = 0.0;
    for (k, v) in y.iter_mut().enumerate().skip(1) {
        if *v < 0.0 {
            moved += (k + 1) as f64 * -*v;
            *v = 0.0;
        }
    }
    if moved != 0.0 {
        y[0] -= moved;
    }
    if y[0] < 0.0 {
        // Only reachable for a vanishing monomer population.
        y[0] = 0.0;
    }
    moved
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    opts: &StepperOptions,
    span: f64,
) -> f64 {
    let n = y0.len() as f64;
    let scale = |y: f64| opts.abs_tol + opts.rel_tol * y.abs();
    let d0 = (y0.iter().map(|y| (y / scale(*y)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y0
        .iter()
        .zip(f0)
        .map(|(y, f)| (f / scale(*y)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    sys.rhs(t0 + h0, &y1, &mut f1);
    let d2 = (y0
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(y, (a, b))| ((b - a) / scale(*y)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrate `sys` from `(t0, y0)` through the increasing `output_times`,
/// calling `observer(t, y)` at each. Returns the state at the last output
/// time together with step statistics.
pub fn dopri5<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    output_times: &[f64],
    opts: &StepperOptions,
    mut observer: F,
) -> Result<(Vec<f64>, IntegrationStats)>
where
    S: OdeSystem,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::InvalidInput(format!(
            "initial state has {} components, system {}",
            y0.len(),
            n
        )));
    }
    if output_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "output times must be strictly increasing".into(),
        ));
    }
    if output_times.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidInput(
            "output times precede the initial time".into(),
        ));
    }
    let mut stats = IntegrationStats {
        min_step: f64::INFINITY,
        ..Default::default()
    };
    let mut y = y0.to_vec();
    let Some(&t_end) = output_times.last() else {
        return Ok((y, stats));
    };

    let mut ws = Workspace::new(n);
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] == t0 {
        observer(t0, &y)?;
        next_out += 1;
    }
    if next_out == output_times.len() {
        return Ok((y, stats));
    }

    sys.rhs(t0, &y, &mut ws.k[0]);
    stats.rhs_evaluations += 1;
    let mut t = t0;
    let mut h = match (opts.fixed_step, opts.initial_step) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => {
            stats.rhs_evaluations += 1;
            initial_step(sys, t0, &y, &ws.k[0], opts, t_end - t0)
        }
    };
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;
    let mut interp = vec![0.0; n];

    while t < t_end {
        if stats.accepted_steps + stats.rejected_steps >= opts.max_steps {
            return Err(Error::TooManySteps {
                max_steps: opts.max_steps,
                t,
            });
        }
        if h < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let h_step = h.min(t_end - t);
        let last = h_step >= t_end - t;

        stage(sys, t, h_step, &y, &mut ws);
        stats.rhs_evaluations += 6;

        let err_norm = if opts.fixed_step.is_some() {
            0.0
        } else {
            for i in 0..n {
                ws.err[i] = h_step
                    * (E1 * ws.k[0][i]
                        + E3 * ws.k[2][i]
                        + E4 * ws.k[3][i]
                        + E5 * ws.k[4][i]
                        + E6 * ws.k[5][i]
                        + E7 * ws.k[6][i]);
            }
            weighted_rms(&ws.err, &y, &ws.y_new, opts)
        };
        if !err_norm.is_finite() || ws.y_new.iter().any(|v| !v.is_finite()) {
            if opts.fixed_step.is_some() {
                return Err(Error::NonFinite { t });
            }
            stats.rejected_steps += 1;
            h = h_step * FAC_MIN;
            last_rejected = true;
            continue;
        }

        if opts.positivity == Positivity::DensityPreservingClamp
            && opts.fixed_step.is_none()
            && ws.y_new.iter().any(|&v| v < -opts.abs_tol)
        {
            stats.rejected_steps += 1;
            stats.negativity_rejections += 1;
            h = h_step / 2.0;
            last_rejected = true;
            continue;
        }

        let fac11 = err_norm.powf(0.2 - BETA * 0.75);
        if err_norm <= 1.0 {
            // Dense output coefficients, before y is overwritten.
            for i in 0..n {
                let ydiff = ws.y_new[i] - y[i];
                let bspl = h_step * ws.k[0][i] - ydiff;
                ws.cont[0][i] = y[i];
                ws.cont[1][i] = ydiff;
                ws.cont[2][i] = bspl;
                ws.cont[3][i] = ydiff - h_step * ws.k[6][i] - bspl;
                ws.cont[4][i] = h_step
                    * (D1 * ws.k[0][i]
                        + D3 * ws.k[2][i]
                        + D4 * ws.k[3][i]
                        + D5 * ws.k[4][i]
                        + D6 * ws.k[5][i]
                        + D7 * ws.k[6][i]);
            }
            let t_new = if last { t_end } else { t + h_step };
            while next_out < output_times.len() && output_times[next_out] <= t_new {
                let t_out = output_times[next_out];
                if t_out == t_new {
                    interp.copy_from_slice(&ws.y_new);
                } else {
                    let theta = (t_out - t) / h_step;
                    let theta1 = 1.0 - theta;
                    for i in 0..n {
                        interp[i] = ws.cont[0][i]
                            + theta
                                * (ws.cont[1][i]
                                    + theta1
                                        * (ws.cont[2][i]
                                            + theta * (ws.cont[3][i] + theta1 * ws.cont[4][i])));
                    }
                }
                if opts.positivity == Positivity::DensityPreservingClamp {
                    clamp_preserving_density(&mut interp);
                }
                observer(t_out, &interp)?;
                next_out += 1;
            }

            std::mem::swap(&mut y, &mut ws.y_new);
            if opts.positivity == Positivity::DensityPreservingClamp {
                let moved = clamp_preserving_density(&mut y);
                if moved != 0.0 {
                    stats.clamped_density += moved;
                    log::debug!("clamped density {moved:e} at t = {t_new}");
                    sys.rhs(t_new, &y, &mut ws.k[6]);
                    stats.rhs_evaluations += 1;
                }
            }
            // FSAL
            ws.k.swap(0, 6);
            t = t_new;
            stats.accepted_steps += 1;
            stats.min_step = stats.min_step.min(h_step);
            stats.max_step = stats.max_step.max(h_step);

            if let Some(fixed) = opts.fixed_step {
                h = fixed;
            } else {
                let mut fac = fac11 / fac_old.powf(BETA);
                fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h_step / fac;
                if last_rejected {
                    h_new = h_new.min(h_step);
                }
                fac_old = err_norm.max(1e-4);
                h = h_new;
            }
            last_rejected = false;
        } else {
            stats.rejected_steps += 1;
            h = h_step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
    if stats.min_step == f64::INFINITY {
        stats.min_step = 0.0;
    }
    Ok((y, stats))
}

fn stage<S: OdeSystem>(sys: &S, t: f64, h: f64, y: &[f64], ws: &mut Workspace) {
    let n = y.len();
    let Workspace {
        k, y_stage, y_new, ..
    } = ws;
    for i in 0..n {
        y_stage[i] = y[i] + h * A21 * k[0][i];
    }
    sys.rhs(t + C2 * h, y_stage, &mut k[1]);
    for i in 0..n {
        y_stage[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    sys.rhs(t + C3 * h, y_stage, &mut k[2]);
    for i in 0..n {
        y_stage[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    sys.rhs(t + C4 * h, y_stage, &mut k[3]);
    for i in 0..n {
        y_stage[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    sys.rhs(t + C5 * h, y_stage, &mut k[4]);
    for i in 0..n {
        y_stage[i] = y[i]
            + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    sys.rhs(t + h, y_stage, &mut k[5]);
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    sys.rhs(t + h, y_new, &mut k[6]);
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn exponential_decay_to_tolerance() {
        let opts = StepperOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            ..Default::default()
        };
        let (y, stats) = dopri5(&Decay(2.0), 0.0, &[1.0], &[3.0], &opts, |_, _| Ok(())).unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-11);
        assert!(stats.accepted_steps > 5);
    }

    #[test]
    fn dense_output_matches_closed_form() {
        let opts = StepperOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let mut worst = 0.0f64;
        dopri5(&Oscillator, 0.0, &[1.0, 0.0], &times, &opts, |t, y| {
            worst = worst
                .max((y[0] - t.cos()).abs())
                .max((y[1] + t.sin()).abs());
            Ok(())
        })
        .unwrap();
        assert!(worst < 1e-7, "worst dense error {worst}");
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let run = |h: f64| {
            let opts = StepperOptions {
                fixed_step: Some(h),
                ..Default::default()
            };
            let (y, _) =
                dopri5(&Oscillator, 0.0, &[1.0, 0.0], &[2.0], &opts, |_, _| Ok(())).unwrap();
            (y[0] - 2f64.cos()).abs()
        };
        let ratio = run(0.02) / run(0.01);
        assert!(ratio > 28.0 && ratio < 36.0, "ratio {ratio}");
    }

    #[test]
    fn clamp_preserves_weighted_sum() {
        let mut y = vec![1.0, -1e-15, 0.5, -2e-15];
        let before: f64 = y.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).sum();
        let moved = clamp_preserving_density(&mut y);
        let after: f64 = y.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).sum();
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!((moved - 1e-14).abs() < 1e-28);
        assert!((before - after).abs() < 1e-15);
    }

    #[test]
    fn rejects_unordered_output_times() {
        let opts = StepperOptions::default();
        assert!(dopri5(&Decay(1.0), 0.0, &[1.0], &[1.0, 0.5], &opts, |_, _| Ok(())).is_err());
        assert!(dopri5(&Decay(1.0), 1.0, &[1.0], &[0.5], &opts, |_, _| Ok(())).is_err());
    }
}
