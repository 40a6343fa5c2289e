//! Explicit `(omega, rho)`-supersolutions dominating a tail profile.
//!
//! A sequence `r` is a supersolution when `r_1 >= rho` and
//! `a_(j-1) omega (r_(j-1) - r_j) + b_j (r_(j+1) - r_j) <= 0` for `j >= 2`.
//! The construction follows the switch-index recipe: beyond an index where
//! `b_j >= lambda omega a_(j-1)`, increments `s_j` decay at least
//! geometrically, and `r` is their suffix sum; before it `r` is flat.

use std::fmt::Write as _;

use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{check_range, Error, Result};
use crate::numeric::CompensatedSum;
use crate::weights::Weight;

/// Pick `lambda = sqrt(delta z_s / omega)` and the smallest switch index
/// `N` with `b_j >= lambda omega a_(j-1)` for every `N <= j <= n_max`.
/// The condition is vacuous at `j = 1`.
pub fn choose_lambda(
    model: &CoefficientModel,
    z_s: f64,
    omega: f64,
    delta: f64,
    n_max: usize,
) -> Result<(f64, usize)> {
    check_range(
        "omega",
        omega,
        omega > 0.0 && omega < z_s,
        "0 < omega < z_s",
    )?;
    check_range(
        "delta",
        delta,
        delta >= 1.0 && delta < z_s / omega,
        "1 <= delta < z_s / omega",
    )?;
    model.ensure_range(n_max)?;
    let lambda = (delta * z_s / omega).sqrt();
    let threshold = lambda * omega;
    let last_failure = (2..=n_max)
        .rev()
        .find(|&j| model.b(j) < threshold * model.a(j - 1));
    match last_failure {
        None => Ok((lambda, 1)),
        Some(j) if j == n_max => Err(Error::NoSwitchIndex {
            failing_index: j,
            n_max,
        }),
        Some(j) => Ok((lambda, j + 1)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupersolutionParams {
    pub omega: f64,
    pub rho: f64,
    pub delta: f64,
    pub lambda: f64,
    pub n_switch: usize,
    /// Largest admissible `g_N / rho`.
    pub tol_tail: f64,
}

impl SupersolutionParams {
    /// Parameters with `lambda` and the switch index chosen over `1..=n`.
    pub fn new(
        model: &CoefficientModel,
        z_s: f64,
        omega: f64,
        rho: f64,
        delta: f64,
        n: usize,
    ) -> Result<Self> {
        check_range("rho", rho, rho > 0.0, "rho > 0")?;
        let (lambda, n_switch) = choose_lambda(model, z_s, omega, delta, n)?;
        Ok(Self {
            omega,
            rho,
            delta,
            lambda,
            n_switch,
            tol_tail: 1e-6,
        })
    }

    /// `min(omega, 1)`; the seed `rho / (lambda min(omega, 1))` keeps the
    /// inequality at the switch index valid for `omega > 1` as well.
    pub fn omega_seed(&self) -> f64 {
        self.omega.min(1.0)
    }

    /// `rho (lambda w + 1) / (w (lambda - 1))` with `w = min(omega, 1)`.
    pub fn uniform_bound(&self) -> f64 {
        let w = self.omega_seed();
        self.rho * (self.lambda * w + 1.0) / (w * (self.lambda - 1.0))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Supersolution {
    #[serde(skip)]
    pub r: Vec<f64>,
    /// Increments `s_j` (zero before the switch index).
    #[serde(skip)]
    pub s: Vec<f64>,
    /// `r_(N+1) = s_N / (lambda - 1)`, the closed-form geometric tail.
    pub r_beyond: f64,
    pub params: SupersolutionParams,
    /// Switch index actually used (may exceed `params.n_switch` by one, see
    /// [`build_supersolution`]).
    pub n_switch_used: usize,
    pub uniform_bound: f64,
}

impl Supersolution {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// `r_l` for `l > N` along the geometric continuation.
    pub fn continued(&self, l: usize) -> f64 {
        let n = self.r.len();
        if l <= n {
            return self.r[l - 1];
        }
        self.r_beyond * self.params.lambda.powi(-((l - n - 1) as i32))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,r_j,s_j\n");
        for (k, (r, s)) in self.r.iter().zip(&self.s).enumerate() {
            let _ = writeln!(out, "{},{r:.16e},{s:.16e}", k + 1);
        }
        out
    }

    /// Audit record: parameters, switch index and bounds.
    pub fn witness(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda": self.params.lambda,
            "delta": self.params.delta,
            "omega": self.params.omega,
            "rho": self.params.rho,
            "n_switch": self.params.n_switch,
            "n_switch_used": self.n_switch_used,
            "uniform_bound": self.uniform_bound,
            "r_1": self.r[0],
            "r_beyond": self.r_beyond,
            "max_r": self.r.iter().copied().fold(0.0, f64::max),
        })
    }
}

fn build_from(params: &SupersolutionParams, g: &[f64], h: &[f64], start: usize) -> Supersolution {
    let n = g.len();
    let lambda = params.lambda;
    let k0 = start - 1;
    let mut s = vec![0.0; n];
    s[k0] = params.rho / (lambda * params.omega_seed()) + h[k0];
    for k in k0 + 1..n {
        s[k] = (s[k - 1] / lambda).max(h[k]);
    }
    let r_beyond = s[n - 1] / (lambda - 1.0);
    // r_j = g_j + sum_(l>=j) (s_l - h_l) + r_beyond; every excess term is
    // non-negative, so r_j >= g_j survives rounding.
    let mut r = vec![0.0; n];
    let mut excess = CompensatedSum::new();
    excess.add(r_beyond);
    for k in (k0..n).rev() {
        excess.add(s[k] - h[k]);
        r[k] = g[k] + excess.value();
    }
    let flat = params.rho.max(r[k0]);
    r[..k0].iter_mut().for_each(|v| *v = flat);
    Supersolution {
        r,
        s,
        r_beyond,
        params: *params,
        n_switch_used: start,
        uniform_bound: params.uniform_bound(),
    }
}

/// Build a supersolution dominating the non-increasing profile `g`.
///
/// When the switch index is 1 and the resulting `r_1` falls short of
/// `rho`, the construction is redone from index 2 so that the flat prefix
/// supplies `r_1 = max(rho, r_2)`.
pub fn build_supersolution(
    model: &CoefficientModel,
    params: &SupersolutionParams,
    g: &[f64],
) -> Result<Supersolution> {
    let n = g.len();
    if n < 3 {
        return Err(Error::InvalidInput(
            "profile needs at least three entries".into(),
        ));
    }
    model.ensure_range(n)?;
    let rho = params.rho;
    check_range("rho", rho, rho > 0.0, "rho > 0")?;
    check_range(
        "lambda",
        params.lambda,
        params.lambda > params.delta.max(1.0),
        "lambda > max(delta, 1)",
    )?;
    if params.n_switch == 0 || params.n_switch > n {
        return Err(Error::InvalidInput(format!(
            "switch index {} outside 1..={n}",
            params.n_switch
        )));
    }
    if let Some(k) = g.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "g_{} = {} is negative",
            k + 1,
            g[k]
        )));
    }
    if let Some(k) = g.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput(format!(
            "profile increases at j = {}",
            k + 2
        )));
    }
    if g[0] > rho * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "g_1 = {} exceeds rho = {rho}",
            g[0]
        )));
    }
    if g[n - 1] > params.tol_tail * rho {
        return Err(Error::InvalidInput(format!(
            "profile has not decayed within the truncation: g_N = {:e} > {:e}",
            g[n - 1],
            params.tol_tail * rho
        )));
    }
    let h: Vec<f64> = (0..n)
        .map(|k| g[k] - if k + 1 < n { g[k + 1] } else { 0.0 })
        .collect();
    let sup = build_from(params, g, &h, params.n_switch);
    if params.n_switch == 1 && sup.r[0] < rho {
        return Ok(build_from(params, g, &h, 2));
    }
    Ok(sup)
}

#[derive(Clone, Debug, Serialize)]
pub struct SupersolutionVerdict {
    pub holds: bool,
    /// `r_1 - rho`.
    pub first_condition_margin: f64,
    /// Largest `(left side of the inequality) / scale_j`.
    pub worst_ratio: f64,
    pub worst_index: usize,
    pub first_violation: Option<usize>,
}

/// Check `r_1 >= rho - tol` and, for `2 <= j <= N-1`,
/// `a_(j-1) omega (r_(j-1) - r_j) + b_j (r_(j+1) - r_j) <= tol * scale_j`
/// with `scale_j = a_(j-1) omega r_(j-1) + b_j r_j`.
pub fn verify_supersolution(
    r: &[f64],
    model: &CoefficientModel,
    omega: f64,
    rho: f64,
    tol: f64,
) -> Result<SupersolutionVerdict> {
    let n = r.len();
    if n < 3 {
        return Err(Error::InvalidInput("need at least three entries".into()));
    }
    model.ensure_range(n)?;
    let first_condition_margin = r[0] - rho;
    let mut verdict = SupersolutionVerdict {
        holds: first_condition_margin >= -tol,
        first_condition_margin,
        worst_ratio: f64::NEG_INFINITY,
        worst_index: 2,
        first_violation: None,
    };
    if !verdict.holds {
        verdict.first_violation = Some(1);
    }
    for j in 2..n {
        let k = j - 1;
        let gain = model.a(j - 1) * omega;
        let loss = model.b(j);
        let lhs = gain * (r[k - 1] - r[k]) + loss * (r[k + 1] - r[k]);
        let scale = gain * r[k - 1] + loss * r[k];
        let ratio = if scale > 0.0 {
            lhs / scale
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > verdict.worst_ratio {
            verdict.worst_ratio = ratio;
            verdict.worst_index = j;
        }
        if lhs > tol * scale && verdict.first_violation.is_none() {
            verdict.first_violation = Some(j);
            verdict.holds = false;
        }
    }
    Ok(verdict)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeightedSumBound {
    /// `sum_j phi_j r_j`, including the geometric continuation past `N`.
    pub lhs: f64,
    /// `C (1 + sum_j phi_j g_j)`.
    pub rhs: f64,
    pub constant: f64,
    pub delta_star: f64,
    pub m: usize,
}

impl WeightedSumBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

fn ln_pos(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `sum phi_j r_j <= C (1 + sum phi_j g_j)` with the explicit constant
/// `C = 2 max(R sum_(j<M) phi_j, lambda delta* / (lambda - delta*) max(1, R phi_(M-1)))`,
/// `R` the uniform bound, `delta* = (delta + lambda) / 2`, and `M` the first
/// index past the switch from which `phi` is non-decreasing with
/// `phi_j / phi_(j-1) <= delta*`.
pub fn weighted_sum_bound(
    sup: &Supersolution,
    g: &[f64],
    phi: &Weight,
) -> Result<WeightedSumBound> {
    let p = &sup.params;
    let n = sup.r.len();
    let lambda = p.lambda;
    let delta_star = 0.5 * (p.delta + lambda);
    let ln_ds = delta_star.ln();
    let start = sup.n_switch_used.max(2);
    let bad = |j: usize| {
        let step = phi.ln_at(j) - phi.ln_at(j - 1);
        step < 0.0 || step > ln_ds
    };
    let m = match (start..=n).rev().find(|&j| bad(j)) {
        None => start,
        Some(j) if j == n => return Err(Error::PhiDecay { delta_star }),
        Some(j) => j + 1,
    };

    let mut lhs = CompensatedSum::new();
    for (k, &rj) in sup.r.iter().enumerate() {
        lhs.add((phi.ln_at(k + 1) + ln_pos(rj)).exp());
    }
    // r_l = s_N lambda^(-(l-N)) lambda / (lambda - 1) beyond the truncation
    let ln_lambda = lambda.ln();
    let ln_r_beyond = ln_pos(sup.r_beyond);
    let mut l = n + 1;
    loop {
        let term = (phi.ln_at(l) + ln_r_beyond - (l - n - 1) as f64 * ln_lambda).exp();
        lhs.add(term);
        if term <= 1e-18 * lhs.value() || term == 0.0 || l > n + 50_000_000 {
            break;
        }
        l += 1;
    }

    let big_r = sup.uniform_bound;
    let prefix: f64 = (1..m).map(|j| phi.at(j)).sum();
    let constant = 2.0
        * (big_r * prefix)
            .max(lambda * delta_star / (lambda - delta_star) * (big_r * phi.at(m - 1)).max(1.0));
    let g_sum = phi.weighted_sum(g);
    Ok(WeightedSumBound {
        lhs: lhs.value(),
        rhs: constant * (1.0 + g_sum),
        constant,
        delta_star,
        m,
    })
}
