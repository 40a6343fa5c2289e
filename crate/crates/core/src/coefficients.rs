//! Coagulation (`a_i`) and fragmentation (`b_i`) rate families, their
//! detailed-balance coefficients `Q_i`, and a numerical check of the
//! standing growth and limit assumptions.
//!
//! Rates are evaluated by formula on demand; only tabulated (custom) models
//! store them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::numeric::{aitken_limit, CompensatedSum};

/// Range scanned to compute `b_bar` for families without a closed form.
const B_BAR_SCAN: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `a_i = i^gamma`, `b_i = a_i (z_s + q / i^(1-mu))`.
    PowerLawFragment,
    /// `a_i = i^gamma`, `b_i = z_s (i-1)^gamma exp(sigma i^mu - sigma (i-1)^mu)`.
    ExponentialTailFragment,
    /// Tabulated rates.
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Family::PowerLawFragment => "power_law",
            Family::ExponentialTailFragment => "exponential_tail",
            Family::Custom => "custom",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug)]
enum Rates {
    PowerLaw {
        gamma: f64,
        z_s: f64,
        q: f64,
        mu: f64,
    },
    ExponentialTail {
        gamma: f64,
        z_s: f64,
        sigma: f64,
        mu: f64,
    },
    Table {
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

/// Growth metadata attached to a model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelMetadata {
    /// Coagulation growth exponent; `1` denotes the linear branch.
    pub gamma: f64,
    /// `a_i <= a_bar i^gamma` (power-law branch).
    pub a_bar: f64,
    /// Linear-branch bounds `c1_lin i <= a_i <= c2_lin i`, when `gamma == 1`.
    pub c1_lin: Option<f64>,
    pub c2_lin: Option<f64>,
    /// Asymptotic ratio `b_i / a_i`, when known from the family parameters.
    pub z_s_param: Option<f64>,
    pub q: Option<f64>,
    pub mu_c: Option<f64>,
    pub sigma: Option<f64>,
    /// `sup_i b_i / a_i` over the evaluated range.
    pub b_bar: f64,
    /// First index from which `b_i` is required to be positive.
    pub b_positive_from: usize,
}

/// An immutable rate model. Cheap to clone for the parametric families.
#[derive(Clone, Debug)]
pub struct CoefficientModel {
    family: Family,
    rates: Rates,
    meta: ModelMetadata,
}

/// Power-law fragmentation family.
pub fn make_power_law_model(gamma: f64, z_s: f64, q: f64, mu_c: f64) -> Result<CoefficientModel> {
    check_range(
        "gamma",
        gamma,
        gamma > 0.0 && gamma <= 1.0,
        "0 < gamma <= 1",
    )?;
    check_range("z_s", z_s, z_s > 0.0, "z_s > 0")?;
    check_range("q", q, q > 0.0, "q > 0")?;
    check_range("mu_c", mu_c, mu_c > 0.0 && mu_c < 1.0, "0 < mu_c < 1")?;
    let linear = gamma == 1.0;
    Ok(CoefficientModel {
        family: Family::PowerLawFragment,
        rates: Rates::PowerLaw {
            gamma,
            z_s,
            q,
            mu: mu_c,
        },
        meta: ModelMetadata {
            gamma,
            a_bar: 1.0,
            c1_lin: linear.then_some(1.0),
            c2_lin: linear.then_some(1.0),
            z_s_param: Some(z_s),
            q: Some(q),
            mu_c: Some(mu_c),
            sigma: None,
            // q / i^(1-mu) is decreasing, so the sup sits at i = 1.
            b_bar: z_s + q,
            b_positive_from: 1,
        },
    })
}

/// Exponential-tail fragmentation family. `b_1` evaluates to zero and is
/// never used by the dynamics.
pub fn make_exponential_tail_model(
    gamma: f64,
    z_s: f64,
    sigma: f64,
    mu_c: f64,
) -> Result<CoefficientModel> {
    check_range("gamma", gamma, gamma > 0.0 && gamma < 1.0, "0 < gamma < 1")?;
    check_range("z_s", z_s, z_s > 0.0, "z_s > 0")?;
    check_range("sigma", sigma, sigma > 0.0, "sigma > 0")?;
    check_range("mu_c", mu_c, mu_c > 0.0 && mu_c < 1.0, "0 < mu_c < 1")?;
    let mut model = CoefficientModel {
        family: Family::ExponentialTailFragment,
        rates: Rates::ExponentialTail {
            gamma,
            z_s,
            sigma,
            mu: mu_c,
        },
        meta: ModelMetadata {
            gamma,
            a_bar: 1.0,
            c1_lin: None,
            c2_lin: None,
            z_s_param: Some(z_s),
            q: None,
            mu_c: Some(mu_c),
            sigma: Some(sigma),
            b_bar: 0.0,
            b_positive_from: 2,
        },
    };
    // b_i / a_i -> z_s from above; the sup is attained at a finite index.
    let scanned = (2..=B_BAR_SCAN)
        .map(|i| model.b(i) / model.a(i))
        .fold(z_s, f64::max);
    model.meta.b_bar = scanned;
    Ok(model)
}

impl CoefficientModel {
    /// Model backed by tabulated rates `a_1..a_n`, `b_1..b_n`.
    ///
    /// `b_1` is never used by the dynamics and may be zero. When `gamma` is
    /// not given it is estimated from the log-log slope of the tail of `a`.
    pub fn tabulated(a: Vec<f64>, b: Vec<f64>, gamma: Option<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "rate columns differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if a.len() < 2 {
            return Err(Error::InvalidInput(
                "need at least two tabulated sizes".into(),
            ));
        }
        if let Some(i) = a.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "a_{} = {} is not positive",
                i + 1,
                a[i]
            )));
        }
        if let Some(i) = b.iter().skip(1).position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "b_{} = {} is not positive",
                i + 2,
                b[i + 1]
            )));
        }
        if !(b[0] >= 0.0 && b[0].is_finite()) {
            return Err(Error::InvalidInput(format!("b_1 = {} is negative", b[0])));
        }
        let n = a.len();
        let gamma = match gamma {
            Some(g) => {
                check_range("gamma", g, (0.0..=1.0).contains(&g), "0 <= gamma <= 1")?;
                g
            }
            None => estimate_growth_exponent(&a).clamp(0.0, 1.0),
        };
        let a_bar = a
            .iter()
            .enumerate()
            .map(|(k, &ai)| ai / ((k + 1) as f64).powf(gamma))
            .fold(0.0, f64::max);
        let linear = gamma == 1.0;
        let (c1, c2) = if linear {
            let ratios = a.iter().enumerate().map(|(k, &ai)| ai / (k + 1) as f64);
            let lo = ratios.clone().fold(f64::INFINITY, f64::min);
            let hi = ratios.fold(0.0, f64::max);
            (Some(lo), Some(hi))
        } else {
            (None, None)
        };
        let b_positive_from = if b[0] > 0.0 { 1 } else { 2 };
        let b_bar = (b_positive_from..=n)
            .map(|i| b[i - 1] / a[i - 1])
            .fold(0.0, f64::max);
        Ok(Self {
            family: Family::Custom,
            rates: Rates::Table { a, b },
            meta: ModelMetadata {
                gamma,
                a_bar,
                c1_lin: c1,
                c2_lin: c2,
                z_s_param: None,
                q: None,
                mu_c: None,
                sigma: None,
                b_bar,
                b_positive_from,
            },
        })
    }

    /// Tabulated model built by evaluating closures for `i = 1..=n`.
    pub fn from_fn(
        n: usize,
        a: impl Fn(usize) -> f64,
        b: impl Fn(usize) -> f64,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let av = (1..=n).map(a).collect();
        let bv = (1..=n).map(b).collect();
        Self::tabulated(av, bv, gamma)
    }

    /// Parse a rate file: one `i a_i b_i` triple per line, whitespace
    /// separated, with contiguous 1-based `i`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse_rates(text: &str, gamma: Option<f64>) -> Result<Self> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected `i a_i b_i`, found {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: `{s}`: {e}", lineno + 1)))
            };
            let i: usize = fields[0].parse().map_err(|e| {
                Error::InvalidInput(format!("line {}: index `{}`: {e}", lineno + 1, fields[0]))
            })?;
            if i != a.len() + 1 {
                return Err(Error::InvalidInput(format!(
                    "line {}: index {i} breaks the contiguous 1-based sequence",
                    lineno + 1
                )));
            }
            a.push(parse(fields[1])?);
            b.push(parse(fields[2])?);
        }
        Self::tabulated(a, b, gamma)
    }

    pub fn from_rates_file(path: &Path, gamma: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_rates(&text, gamma)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn meta(&self) -> &ModelMetadata {
        &self.meta
    }

    /// Largest index the model can evaluate (`None` for formula families).
    pub fn max_index(&self) -> Option<usize> {
        match &self.rates {
            Rates::Table { a, .. } => Some(a.len()),
            _ => None,
        }
    }

    pub fn ensure_range(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(m) if n > m => Err(Error::TruncationBeyondTable {
                requested: n,
                available: m,
            }),
            _ => Ok(()),
        }
    }

    /// Coagulation rate `a_i`, `i >= 1`.
    #[inline]
    pub fn a(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        match &self.rates {
            Rates::PowerLaw { gamma, .. } | Rates::ExponentialTail { gamma, .. } => {
                if *gamma == 1.0 {
                    i as f64
                } else {
                    (i as f64).powf(*gamma)
                }
            }
            Rates::Table { a, .. } => a[i - 1],
        }
    }

    /// Fragmentation rate `b_i`, `i >= 1`.
    #[inline]
    pub fn b(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        match &self.rates {
            Rates::PowerLaw { z_s, q, mu, .. } => self.a(i) * (z_s + q * (i as f64).powf(mu - 1.0)),
            Rates::ExponentialTail {
                gamma,
                z_s,
                sigma,
                mu,
            } => {
                if i == 1 {
                    return 0.0;
                }
                let x = i as f64;
                let xm = x - 1.0;
                z_s * xm.powf(*gamma) * (sigma * (x.powf(*mu) - xm.powf(*mu))).exp()
            }
            Rates::Table { b, .. } => b[i - 1],
        }
    }

    /// `ln(a_i / b_(i+1)) = ln(Q_(i+1) / Q_i)`.
    #[inline]
    pub fn log_q_step(&self, i: usize) -> f64 {
        match &self.rates {
            Rates::PowerLaw { gamma, z_s, q, mu } => {
                let x = i as f64;
                let y = x + 1.0;
                gamma * (x / y).ln() - (z_s + q * y.powf(mu - 1.0)).ln()
            }
            Rates::ExponentialTail { z_s, sigma, mu, .. } => {
                // a_i / b_(i+1) = exp(-sigma ((i+1)^mu - i^mu)) / z_s
                let x = i as f64;
                -sigma * ((x + 1.0).powf(*mu) - x.powf(*mu)) - z_s.ln()
            }
            Rates::Table { a, b } => a[i - 1].ln() - b[i].ln(),
        }
    }

    /// Rates `a_1..a_n` and `b_1..b_n` as vectors (0-based storage).
    pub fn tabulate(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.ensure_range(n)?;
        Ok((
            (1..=n).map(|i| self.a(i)).collect(),
            (1..=n).map(|i| self.b(i)).collect(),
        ))
    }
}

/// Least-squares slope of `ln a_i` against `ln i` over the last decade of the
/// table.
fn estimate_growth_exponent(a: &[f64]) -> f64 {
    let n = a.len();
    let start = (n / 10).max(1);
    let pts: Vec<(f64, f64)> = (start..=n)
        .map(|i| ((i as f64).ln(), a[i - 1].ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Detailed-balance coefficients `Q_1..Q_N`, stored as logarithms.
#[derive(Clone, Debug)]
pub struct DetailedBalance {
    log_q: Vec<f64>,
    /// `ln(a_i / b_(i+1))`, kept separately so ratios avoid cancellation.
    log_step: Vec<f64>,
    /// `Q_N / Q_(N-1)`, the last computed ratio.
    pub ratio_tail: f64,
}

impl DetailedBalance {
    pub fn len(&self) -> usize {
        self.log_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_q.is_empty()
    }

    /// `ln Q_1 .. ln Q_N` (0-based storage).
    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    /// `Q_i` for 1-based `i`.
    pub fn q(&self, i: usize) -> f64 {
        self.log_q[i - 1].exp()
    }

    pub fn q_seq(&self) -> Vec<f64> {
        self.log_q.iter().map(|l| l.exp()).collect()
    }

    /// `Q_(i+1) / Q_i` for `1 <= i < N`.
    pub fn ratio(&self, i: usize) -> f64 {
        self.log_step[i - 1].exp()
    }

    /// Extrapolated limit of `Q_(i+1) / Q_i` from samples at `N/4`, `N/2`
    /// and `N - 1`; `None` when the ratios are not converging.
    pub fn ratio_limit(&self) -> Option<f64> {
        let n = self.len();
        if n < 8 {
            return Some(self.ratio(n - 1));
        }
        aitken_limit(self.ratio(n / 4), self.ratio(n / 2), self.ratio(n - 1))
    }
}

/// `Q_1 = 1`, `Q_(i+1) = (a_i / b_(i+1)) Q_i`, accumulated in log space.
pub fn detailed_balance(model: &CoefficientModel, n: usize) -> Result<DetailedBalance> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "detailed balance needs N >= 2, got {n}"
        )));
    }
    model.ensure_range(n)?;
    let mut log_q = Vec::with_capacity(n);
    let mut log_step = Vec::with_capacity(n - 1);
    let mut acc = CompensatedSum::new();
    log_q.push(0.0);
    for i in 1..n {
        let step = model.log_q_step(i);
        log_step.push(step);
        acc.add(step);
        let v = acc.value();
        if !v.is_finite() {
            return Err(Error::DetailedBalanceOverflow { index: i + 1 });
        }
        log_q.push(v);
    }
    let ratio_tail = log_step[n - 2].exp();
    Ok(DetailedBalance {
        log_q,
        log_step,
        ratio_tail,
    })
}

/// Outcome of one assumption check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    /// 1-based index of the first violation, if any.
    pub first_violation: Option<usize>,
}

impl Verdict {
    fn from_first_violation(first_violation: Option<usize>) -> Self {
        Self {
            holds: first_violation.is_none(),
            first_violation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub n: usize,
    pub tol: f64,
    /// Growth bound on `a_i` (power-law or linear branch).
    pub growth_bound: Verdict,
    /// `0 < b_i <= b_bar a_i`.
    pub fragmentation_bound: Verdict,
    pub b_bar: f64,
    /// `Q_(i+1)/Q_i` converges monotonically to `1/z_s`.
    pub ratio_limit: Verdict,
    /// Extrapolated limit of `Q_(i+1)/Q_i` (`None` if not converging).
    pub ratio_limit_estimate: Option<f64>,
    /// `z_s` the ratio is compared against.
    pub z_s_reference: f64,
    /// `Q_i z_s^i` is non-increasing from `i0` on.
    pub critical_non_increasing: Verdict,
    pub i0: Option<usize>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.growth_bound.holds
            && self.fragmentation_bound.holds
            && self.ratio_limit.holds
            && self.critical_non_increasing.holds
    }
}

/// Relative slack for comparisons that are equalities by construction.
const ROUNDOFF: f64 = 1e-12;

/// Scan `i = 1..=n` for the growth, fragmentation-bound, ratio-limit and
/// critical-monotonicity assumptions. Violations are reported, not raised.
pub fn check_assumptions(model: &CoefficientModel, n: usize, tol: f64) -> Result<AssumptionReport> {
    if n < 10 {
        return Err(Error::InvalidInput(format!(
            "assumption scan needs N >= 10, got {n}"
        )));
    }
    model.ensure_range(n)?;
    let meta = model.meta();

    let growth_violation = match (meta.c1_lin, meta.c2_lin) {
        (Some(c1), Some(c2)) => (1..=n).find(|&i| {
            let a = model.a(i);
            let x = i as f64;
            !(a > 0.0 && a >= c1 * x * (1.0 - ROUNDOFF) && a <= c2 * x * (1.0 + ROUNDOFF))
        }),
        _ => (1..=n).find(|&i| {
            let a = model.a(i);
            !(a > 0.0 && a <= meta.a_bar * (i as f64).powf(meta.gamma) * (1.0 + ROUNDOFF))
        }),
    };
    let growth_violation = growth_violation.or_else(|| {
        // Tabulated rates must also not outgrow the linear branch.
        if model.family() == Family::Custom
            && estimate_growth_exponent(&model.tabulate(n).ok()?.0) > 1.0 + tol
        {
            Some(n)
        } else {
            None
        }
    });

    let frag_violation = (meta.b_positive_from..=n).find(|&i| {
        let (a, b) = (model.a(i), model.b(i));
        !(b > 0.0 && b <= meta.b_bar * a * (1.0 + ROUNDOFF))
    });

    let db = detailed_balance(model, n)?;
    let limit = db.ratio_limit();
    let z_s_reference = meta
        .z_s_param
        .or_else(|| limit.filter(|l| *l > 0.0).map(|l| 1.0 / l))
        .unwrap_or(f64::NAN);
    let ratio_violation = match limit {
        None => Some(n - 1),
        Some(l) if !((l * z_s_reference - 1.0).abs() <= tol) => Some(n - 1),
        Some(_) => {
            // Monotone approach over the last tenth of the range.
            let target = 1.0 / z_s_reference;
            let start = (n - n / 10).max(2);
            let mut prev = (db.ratio(start - 1) - target).abs();
            let mut bad = None;
            for i in start..n {
                let d = (db.ratio(i) - target).abs();
                if d > prev * (1.0 + ROUNDOFF) + f64::EPSILON * target {
                    bad = Some(i);
                    break;
                }
                prev = d;
            }
            bad
        }
    };

    // Q_(i+1) z_s^(i+1) <= Q_i z_s^i  <=>  ln(Q_(i+1)/Q_i) + ln z_s <= 0.
    let ln_zs = z_s_reference.ln();
    let mut i0 = 1;
    for i in 1..n {
        let step = db.log_q()[i] - db.log_q()[i - 1] + ln_zs;
        if !(step <= ROUNDOFF) {
            i0 = i + 1;
        }
    }
    let monotone_tail_ok = z_s_reference.is_finite() && i0 <= n - n / 10;
    let critical = Verdict {
        holds: monotone_tail_ok,
        first_violation: if i0 > 1 { Some(i0 - 1) } else { None },
    };

    Ok(AssumptionReport {
        n,
        tol,
        growth_bound: Verdict::from_first_violation(growth_violation),
        fragmentation_bound: Verdict::from_first_violation(frag_violation),
        b_bar: meta.b_bar,
        ratio_limit: Verdict::from_first_violation(ratio_violation),
        ratio_limit_estimate: limit,
        z_s_reference,
        critical_non_increasing: critical,
        i0: monotone_tail_ok.then_some(i0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn family_a() -> CoefficientModel {
        make_power_law_model(0.5, 1.0, 1.0, 0.5).unwrap()
    }

    fn family_b() -> CoefficientModel {
        make_exponential_tail_model(0.5, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn power_law_formula_values() {
        let m = family_a();
        assert_relative_eq!(m.a(4), 2.0, epsilon = 1e-15);
        assert_relative_eq!(m.b(4), 3.0, epsilon = 1e-15);
        assert_eq!(m.meta().b_bar, 2.0);
    }

    #[test]
    fn linear_power_law_has_unit_bounds() {
        let m = make_power_law_model(1.0, 2.0, 1.0, 0.5).unwrap();
        for i in 1..50 {
            assert_eq!(m.a(i), i as f64);
        }
        assert_eq!(m.meta().c1_lin, Some(1.0));
        assert_eq!(m.meta().c2_lin, Some(1.0));
    }

    #[test]
    fn exponential_tail_formula_values() {
        let m = family_b();
        assert_relative_eq!(m.b(2), (2f64.sqrt() - 1.0).exp(), max_relative = 1e-14);
        assert_relative_eq!(m.b(2), 1.513180, max_relative = 1e-6);
        assert_eq!(m.a(9), 3.0);
        assert_eq!(m.b(1), 0.0);
        assert!(m.meta().b_bar >= 1.0);
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(make_power_law_model(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(make_power_law_model(1.5, 1.0, 1.0, 0.5).is_err());
        assert!(make_power_law_model(0.5, -1.0, 1.0, 0.5).is_err());
        assert!(make_power_law_model(0.5, 1.0, 0.0, 0.5).is_err());
        assert!(make_power_law_model(0.5, 1.0, 1.0, 1.0).is_err());
        assert!(make_exponential_tail_model(1.0, 1.0, 1.0, 0.5).is_err());
        assert!(make_exponential_tail_model(0.5, 1.0, 0.0, 0.5).is_err());
        assert!(make_exponential_tail_model(0.5, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn detailed_balance_small_cases() {
        let ones = CoefficientModel::from_fn(10, |_| 1.0, |_| 1.0, None).unwrap();
        let db = detailed_balance(&ones, 5).unwrap();
        assert_eq!(db.q_seq(), vec![1.0; 5]);

        let halves = CoefficientModel::from_fn(10, |_| 1.0, |_| 2.0, None).unwrap();
        let db = detailed_balance(&halves, 3).unwrap();
        let q = db.q_seq();
        assert_relative_eq!(q[1], 0.5, max_relative = 1e-15);
        assert_relative_eq!(q[2], 0.25, max_relative = 1e-15);

        let db = detailed_balance(&family_a(), 2).unwrap();
        assert_relative_eq!(db.q(2), 2f64.sqrt() - 1.0, max_relative = 1e-14);
        assert!(detailed_balance(&family_a(), 1).is_err());
    }

    #[test]
    fn detailed_balance_recursion_holds_to_roundoff() {
        for model in [family_a(), family_b()] {
            let db = detailed_balance(&model, 300).unwrap();
            for i in 1..300 {
                let lhs = db.q(i + 1) * model.b(i + 1);
                let rhs = model.a(i) * db.q(i);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
            }
            assert!(db.ratio_tail > 0.0);
        }
    }

    #[test]
    fn ratio_limit_converges_to_inverse_z_s() {
        // family A: error in Q_(i+1)/Q_i decays like i^(mu-1)
        let m = make_power_law_model(0.5, 2.0, 1.0, 0.5).unwrap();
        let mut errs = Vec::new();
        for n in [1_000, 4_000, 16_000] {
            let db = detailed_balance(&m, n).unwrap();
            errs.push((db.ratio_tail * 2.0 - 1.0).abs());
            let extrapolated = db.ratio_limit().unwrap();
            assert!((extrapolated * 2.0 - 1.0).abs() < (db.ratio_tail * 2.0 - 1.0).abs());
        }
        // quadrupling N halves the raw error: slope mu - 1 = -1/2
        assert!(errs[1] / errs[0] < 0.6 && errs[1] / errs[0] > 0.4);
        assert!(errs[2] / errs[1] < 0.6 && errs[2] / errs[1] > 0.4);
    }

    #[test]
    fn both_families_satisfy_all_assumptions() {
        let report = check_assumptions(&family_a(), 10_000, 1e-2).unwrap();
        assert!(report.all_hold(), "{report:?}");
        assert_eq!(report.i0, Some(1));
        let report = check_assumptions(&family_b(), 10_000, 1e-2).unwrap();
        assert!(report.all_hold(), "{report:?}");
    }

    #[test]
    fn diverging_ratio_is_reported() {
        let m = CoefficientModel::from_fn(10_000, |_| 1.0, |i| 1.0 / i as f64, None).unwrap();
        let report = check_assumptions(&m, 10_000, 1e-2).unwrap();
        assert!(report.fragmentation_bound.holds);
        assert_eq!(report.b_bar, 1.0);
        assert!(!report.ratio_limit.holds);
    }

    #[test]
    fn constant_rates_have_flat_critical_sequence() {
        let m = CoefficientModel::from_fn(1_000, |_| 1.0, |_| 1.0, None).unwrap();
        let report = check_assumptions(&m, 1_000, 1e-2).unwrap();
        assert!(report.critical_non_increasing.holds);
        assert_eq!(report.i0, Some(1));
        assert!(report.all_hold());
    }

    #[test]
    fn initial_non_monotone_prefix_is_surfaced() {
        // Q ratio above 1/z_s for the first few sizes, then below.
        let m = CoefficientModel::from_fn(
            2_000,
            |_| 1.0,
            |i| if i <= 4 { 0.5 } else { 1.0 + 1.0 / i as f64 },
            None,
        )
        .unwrap();
        let report = check_assumptions(&m, 2_000, 1e-2).unwrap();
        assert!(report.critical_non_increasing.holds);
        assert!(report.i0.unwrap() > 1);
    }

    #[test]
    fn rate_file_round_trip() {
        let text = "# i a b\n1 1.0 0.0\n2 1.5 2.0\n3 2.0 2.5\n";
        let m = CoefficientModel::parse_rates(text, None).unwrap();
        assert_eq!(m.family(), Family::Custom);
        assert_eq!(m.max_index(), Some(3));
        assert_eq!(m.a(2), 1.5);
        assert_eq!(m.b(3), 2.5);
        assert_eq!(m.meta().b_positive_from, 2);
        assert!(detailed_balance(&m, 4).is_err());

        assert!(CoefficientModel::parse_rates("1 1 1\n3 1 1\n", None).is_err());
        assert!(CoefficientModel::parse_rates("1 1\n", None).is_err());
        assert!(CoefficientModel::parse_rates("1 1 1\n2 -1 1\n", None).is_err());
    }
}
