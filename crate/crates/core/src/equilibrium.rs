//! Critical quantities, the subcritical monomer activity `z_bar`, the
//! equilibrium profile `Q_i z_bar^i`, and the relative free energy.
//!
//! The equilibrium density is the `i`-weighted series
//! `F(z) = sum_i i Q_i z^i`, consistent with the conserved density.

use serde::Serialize;

use crate::coefficients::{detailed_balance, CoefficientModel, DetailedBalance};
use crate::error::{check_range, Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};

/// Truncation used to estimate `z_s` and `rho_s` when callers do not pick one.
pub const CRITICAL_SCAN: usize = 1 << 17;
/// Partial sums must cover at least this many terms before divergence is
/// declared rather than reported as inconclusive.
pub const DIVERGENCE_MIN_TERMS: usize = 100_000;
/// Default Cauchy tolerance for the critical density partial sums.
pub const CRITICAL_TOL: f64 = 1e-10;

const MAX_SERIES_TERMS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum CriticalDensity {
    Finite(f64),
    /// Partial sums keep growing past the divergence cutoff.
    Divergent,
    /// Partial sums had not stabilized, but the truncation is too short to
    /// call it divergent. Carries the last partial sum.
    Inconclusive(f64),
}

impl CriticalDensity {
    /// Upper bound usable for subcriticality tests (`+inf` unless finite).
    pub fn bound(&self) -> f64 {
        match *self {
            CriticalDensity::Finite(v) => v,
            _ => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, CriticalDensity::Finite(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalValues {
    pub z_s: f64,
    pub rho_s: CriticalDensity,
    /// Truncation the estimates were computed with.
    pub n: usize,
}

/// Estimate `z_s` as the reciprocal of the extrapolated limit of
/// `Q_(i+1)/Q_i`, and `rho_s` from the partial sums of `i Q_i z_s^i`.
pub fn critical_values(model: &CoefficientModel, n: usize, tol: f64) -> Result<CriticalValues> {
    let db = detailed_balance(model, n)?;
    critical_values_from(&db, tol)
}

pub fn critical_values_from(db: &DetailedBalance, tol: f64) -> Result<CriticalValues> {
    let limit = db.ratio_limit().ok_or_else(|| {
        Error::InvalidInput("Q_(i+1)/Q_i does not converge; z_s is undefined".into())
    })?;
    if !(limit > 0.0 && limit.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "Q_(i+1)/Q_i tends to {limit}; z_s must be positive and finite"
        )));
    }
    Ok(critical_density_at(db, 1.0 / limit, tol))
}

/// `rho_s` by partial summation of `i Q_i z_s^i` at a given `z_s`.
fn critical_density_at(db: &DetailedBalance, z_s: f64, tol: f64) -> CriticalValues {
    let n = db.len();
    let ln_z = z_s.ln();
    let half = n / 2;
    let mut acc = CompensatedSum::new();
    let mut s_half = 0.0;
    for (k, &lq) in db.log_q().iter().enumerate() {
        let i = (k + 1) as f64;
        acc.add(i * (lq + i * ln_z).exp());
        if k + 1 == half {
            s_half = acc.value();
        }
    }
    let s_n = acc.value();
    let rho_s = if !s_n.is_finite() {
        CriticalDensity::Divergent
    } else if s_n <= s_half * (1.0 + tol) {
        CriticalDensity::Finite(s_n)
    } else if n >= DIVERGENCE_MIN_TERMS {
        CriticalDensity::Divergent
    } else {
        CriticalDensity::Inconclusive(s_n)
    };
    CriticalValues { z_s, rho_s, n }
}

/// Critical data used by equilibrium computations. Parametric families
/// know `z_s` exactly, and the scan estimate converges only like the
/// slowest correction in `Q_(i+1)/Q_i`, so the known value wins.
fn default_critical(model: &CoefficientModel) -> Result<CriticalValues> {
    let n = model
        .max_index()
        .map_or(CRITICAL_SCAN, |m| m.min(CRITICAL_SCAN));
    match model.meta().z_s_param {
        Some(z_s) => Ok(critical_density_at(
            &detailed_balance(model, n)?,
            z_s,
            CRITICAL_TOL,
        )),
        None => critical_values(model, n, CRITICAL_TOL),
    }
}

/// Lazily extended evaluation of `F(z) = sum_i i Q_i z^i`.
struct DensitySeries<'a> {
    model: &'a CoefficientModel,
    log_q: Vec<f64>,
    acc: CompensatedSum,
    cap: usize,
}

impl<'a> DensitySeries<'a> {
    fn new(model: &'a CoefficientModel) -> Self {
        let cap = model.max_index().unwrap_or(MAX_SERIES_TERMS);
        Self {
            model,
            log_q: vec![0.0],
            acc: CompensatedSum::new(),
            cap,
        }
    }

    fn extend_to(&mut self, n: usize) -> Result<()> {
        while self.log_q.len() < n {
            let i = self.log_q.len();
            self.acc.add(self.model.log_q_step(i));
            let v = self.acc.value();
            if !v.is_finite() {
                return Err(Error::DetailedBalanceOverflow { index: i + 1 });
            }
            self.log_q.push(v);
        }
        Ok(())
    }

    /// `F(z)` with the remainder after the last kept term below `abs_tol`.
    fn eval(&mut self, z: f64, abs_tol: f64) -> Result<f64> {
        if z == 0.0 {
            return Ok(0.0);
        }
        let ln_z = z.ln();
        let mut n = 64.min(self.cap);
        loop {
            self.extend_to(n)?;
            let term = |k: usize| ((k + 1) as f64) * (self.log_q[k] + (k + 1) as f64 * ln_z).exp();
            let last = term(n - 1);
            let prev = term(n - 2);
            let ratio = if prev > 0.0 { last / prev } else { 0.0 };
            let remainder = if last == 0.0 {
                0.0
            } else if ratio < 1.0 {
                last * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if remainder <= abs_tol {
                return Ok(compensated_sum((0..n).map(term)));
            }
            if n >= self.cap {
                return Err(Error::SeriesTruncation {
                    max_terms: self.cap,
                });
            }
            n = (2 * n).min(self.cap);
        }
    }
}

/// Monomer activity `z_bar` with `F(z_bar) = rho`, found by bisection on
/// `[0, z_s)`.
pub fn solve_monomer_activity(model: &CoefficientModel, rho: f64, tol: f64) -> Result<f64> {
    let crit = default_critical(model)?;
    solve_monomer_activity_with(model, &crit, rho, tol)
}

pub fn solve_monomer_activity_with(
    model: &CoefficientModel,
    crit: &CriticalValues,
    rho: f64,
    tol: f64,
) -> Result<f64> {
    check_range("rho", rho, rho > 0.0, "rho > 0")?;
    check_range("tol", tol, tol > 0.0, "tol > 0")?;
    if rho >= crit.rho_s.bound() {
        return Err(Error::Supercritical {
            rho,
            rho_s: crit.rho_s.bound(),
        });
    }
    let mut series = DensitySeries::new(model);
    let abs_tol = tol * rho / 10.0;

    let z_s = crit.z_s;
    let mut hi = 0.999 * z_s;
    let mut f_hi = series.eval(hi, abs_tol)?;
    let mut expansions = 0;
    while f_hi < rho {
        if expansions == 8 {
            return Err(Error::Supercritical { rho, rho_s: f_hi });
        }
        hi = z_s - (z_s - hi) / 10.0;
        f_hi = series.eval(hi, abs_tol)?;
        expansions += 1;
    }

    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if series.eval(mid, abs_tol)? < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z_bar = 0.5 * (lo + hi);
    let residual = (series.eval(z_bar, abs_tol)? - rho).abs();
    if residual > tol * rho {
        log::warn!(
            "monomer activity residual {residual:e} exceeds tol*rho = {:e}",
            tol * rho
        );
    }
    Ok(z_bar)
}

/// Equilibrium `Q_i z_bar^i` on `i = 1..=N` together with critical data.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumData {
    pub z_s: f64,
    pub rho_s: CriticalDensity,
    pub z_bar: f64,
    #[serde(skip)]
    pub profile: Vec<f64>,
    #[serde(skip)]
    pub log_profile: Vec<f64>,
    /// `sum_(i<=N) i Q_i z_bar^i`.
    pub rho: f64,
    /// First index whose profile entry underflowed to zero.
    pub n_cut: Option<usize>,
    /// Geometric estimate of `sum_(i>N) i Q_i z_bar^i`.
    pub tail_remainder: f64,
}

pub fn equilibrium_profile(
    model: &CoefficientModel,
    z_bar: f64,
    n: usize,
) -> Result<EquilibriumData> {
    let crit = default_critical(model)?;
    equilibrium_profile_with(model, &crit, z_bar, n)
}

pub fn equilibrium_profile_with(
    model: &CoefficientModel,
    crit: &CriticalValues,
    z_bar: f64,
    n: usize,
) -> Result<EquilibriumData> {
    check_range(
        "z_bar",
        z_bar,
        z_bar >= 0.0 && z_bar < crit.z_s,
        "0 <= z_bar < z_s",
    )?;
    let db = detailed_balance(model, n)?;
    let ln_z = z_bar.ln();
    let log_profile: Vec<f64> = db
        .log_q()
        .iter()
        .enumerate()
        .map(|(k, &lq)| {
            if z_bar == 0.0 {
                f64::NEG_INFINITY
            } else {
                lq + (k + 1) as f64 * ln_z
            }
        })
        .collect();
    let profile: Vec<f64> = log_profile.iter().map(|l| l.exp()).collect();
    let n_cut = if z_bar == 0.0 {
        None
    } else {
        profile.iter().position(|&q| q == 0.0).map(|k| k + 1)
    };
    let rho = compensated_sum(profile.iter().enumerate().map(|(k, &q)| (k + 1) as f64 * q));
    let tail_remainder = {
        let t = |k: usize| (k + 1) as f64 * profile[k];
        let (last, prev) = (t(n - 1), t(n - 2));
        if last == 0.0 {
            0.0
        } else if last < prev {
            let r = last / prev;
            last * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    };
    Ok(EquilibriumData {
        z_s: crit.z_s,
        rho_s: crit.rho_s,
        z_bar,
        profile,
        log_profile,
        rho,
        n_cut,
        tail_remainder,
    })
}

impl EquilibriumData {
    /// Solve for `z_bar` at density `rho` and build the profile on `1..=n`.
    pub fn for_density(model: &CoefficientModel, rho: f64, n: usize, tol: f64) -> Result<Self> {
        let crit = default_critical(model)?;
        let z_bar = solve_monomer_activity_with(model, &crit, rho, tol)?;
        equilibrium_profile_with(model, &crit, z_bar, n)
    }

    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    /// Key-value pairs describing this equilibrium.
    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let rho_s = match self.rho_s {
            CriticalDensity::Finite(v) => format!("{v:.15e}"),
            CriticalDensity::Divergent => "inf".to_string(),
            CriticalDensity::Inconclusive(v) => format!("inconclusive({v:.15e})"),
        };
        vec![
            ("z_s", format!("{:.15e}", self.z_s)),
            ("rho_s", rho_s),
            ("z_bar", format!("{:.15e}", self.z_bar)),
            ("rho_equilibrium", format!("{:.15e}", self.rho)),
            ("n", self.len().to_string()),
            (
                "n_cut",
                self.n_cut
                    .map_or_else(|| "none".to_string(), |c| c.to_string()),
            ),
            ("tail_remainder", format!("{:.6e}", self.tail_remainder)),
            (
                "free_energy_reference",
                format!("{:.15e}", compensated_sum(self.profile.iter().copied())),
            ),
        ]
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        self.summary()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// `H(c | Q) = sum_i c_i ln(c_i / Q_i) - c_i + Q_i`, with `0 ln 0 = 0`.
pub fn relative_free_energy(c: &[f64], equilibrium: &EquilibriumData) -> Result<f64> {
    if c.len() != equilibrium.len() {
        return Err(Error::InvalidInput(format!(
            "state has {} sizes, equilibrium {}",
            c.len(),
            equilibrium.len()
        )));
    }
    let mut acc = CompensatedSum::new();
    for (k, (&ci, &lq)) in c.iter().zip(&equilibrium.log_profile).enumerate() {
        let q = equilibrium.profile[k];
        if ci == 0.0 {
            acc.add(q);
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Err(Error::FreeEnergyDomain { index: k + 1 });
        }
        let log_ratio = ci.ln() - lq;
        let term = if log_ratio.abs() < 0.5 && q > 0.0 {
            // q * (x ln x - x + 1) with x = c/q, written around x = 1
            let d = log_ratio.exp_m1();
            q * ((1.0 + d) * log_ratio - d)
        } else {
            ci * log_ratio - ci + q
        };
        acc.add(term.max(0.0));
    }
    Ok(acc.value())
}
