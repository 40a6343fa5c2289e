//! Tail densities `G_j = sum_(i>=j) c_i` and the moment comparisons they
//! satisfy.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{check_range, Error, Result};
use crate::numeric::compensated_sum;
use crate::weights::Weight;

/// Relative slack granted to comparisons that hold with equality in exact
/// arithmetic (for instance `M_0(G) = M_1(c)`).
pub const ROUNDOFF_SLACK: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailDensity {
    /// `g[j-1] = G_j`.
    pub g: Vec<f64>,
}

impl TailDensity {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// First differences `G_j - G_(j+1)`, i.e. the concentrations.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.g.len();
        (0..n)
            .map(|k| self.g[k] - if k + 1 < n { self.g[k + 1] } else { 0.0 })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,G_j\n");
        for (k, v) in self.g.iter().enumerate() {
            let _ = writeln!(out, "{},{v:.16e}", k + 1);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Suffix sums accumulated from the right.
pub fn tail_density(c: &[f64]) -> TailDensity {
    let mut g = vec![0.0; c.len()];
    let mut acc = 0.0;
    for (k, &v) in c.iter().enumerate().rev() {
        acc += v;
        g[k] = acc;
    }
    TailDensity { g }
}

/// `sum_j j^k G_j`.
pub fn tail_moment(g: &[f64], k: f64) -> f64 {
    Weight::power(k).weighted_sum(g)
}

/// `M_(k+1)(c) / (k+1) <= M_k(G) <= M_(k+1)(c)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentSandwich {
    pub k: f64,
    pub lower: f64,
    pub tail_moment: f64,
    pub upper: f64,
}

impl MomentSandwich {
    pub fn lower_margin(&self) -> f64 {
        self.tail_moment - self.lower
    }

    pub fn upper_margin(&self) -> f64 {
        self.upper - self.tail_moment
    }

    /// Both inequalities, up to [`ROUNDOFF_SLACK`] relative to the upper side.
    pub fn holds(&self) -> bool {
        let slack = ROUNDOFF_SLACK * self.upper.abs();
        self.lower_margin() >= -slack && self.upper_margin() >= -slack
    }
}

pub fn moment_sandwich(c: &[f64], k: f64) -> MomentSandwich {
    let g = tail_density(c);
    let upper = Weight::power(k + 1.0).weighted_sum(c);
    MomentSandwich {
        k,
        lower: upper / (k + 1.0),
        tail_moment: tail_moment(&g.g, k),
        upper,
    }
}

/// `psi_j = j^(mu-1) exp(alpha j^mu)` and the constants `eta_1 <= eta_2`
/// comparing `sum psi_j G_j` with the stretched exponential moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StretchedWeights {
    pub alpha: f64,
    pub mu: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Index attaining the infimum in `eta1` within the scan.
    pub argmin: usize,
}

/// Scan length for the infimum defining `eta1`.
const ETA_SCAN: usize = 10_000;

pub fn stretched_weights(alpha: f64, mu: f64) -> Result<StretchedWeights> {
    check_range(
        "alpha",
        alpha,
        alpha > 0.0 && alpha.is_finite(),
        "alpha > 0",
    )?;
    check_range("mu", mu, mu > 0.0 && mu < 1.0, "0 < mu < 1")?;
    let (argmin, inf) = stretched_infimum(alpha, mu, ETA_SCAN);
    // The sequence tends to 1 from below, so the limit never undercuts the scan.
    Ok(StretchedWeights {
        alpha,
        mu,
        eta1: (alpha * mu * inf).min(1.0),
        eta2: (2f64.powf(1.0 - mu) * alpha * mu).max(1.0),
        argmin,
    })
}

/// `min_(2<=j<=n) exp(alpha ((j-1)^mu - j^mu))` and its argument.
pub fn stretched_infimum(alpha: f64, mu: f64, n: usize) -> (usize, f64) {
    (2..=n.max(2))
        .map(|j| {
            let x = j as f64;
            (j, (alpha * ((x - 1.0).powf(mu) - x.powf(mu))).exp())
        })
        .fold(
            (2, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

impl StretchedWeights {
    pub fn weight(&self) -> Weight {
        Weight::tail_psi(self.alpha, self.mu)
    }

    pub fn psi(&self, j: usize) -> f64 {
        self.weight().at(j)
    }
}

/// `eta_1 sum psi_j G_j <= E(c) <= eta_2 sum psi_j G_j`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StretchedSandwich {
    pub lower: f64,
    pub moment: f64,
    pub upper: f64,
}

impl StretchedSandwich {
    pub fn lower_margin(&self) -> f64 {
        self.moment - self.lower
    }

    pub fn upper_margin(&self) -> f64 {
        self.upper - self.moment
    }

    pub fn holds(&self) -> bool {
        let slack = ROUNDOFF_SLACK * self.upper.abs();
        self.lower_margin() >= -slack && self.upper_margin() >= -slack
    }
}

pub fn stretched_sandwich_check(c: &[f64], weights: &StretchedWeights) -> StretchedSandwich {
    let g = tail_density(c);
    let psi_sum = weights.weight().weighted_sum(&g.g);
    StretchedSandwich {
        lower: weights.eta1 * psi_sum,
        moment: Weight::stretched(weights.alpha, weights.mu).weighted_sum(c),
        upper: weights.eta2 * psi_sum,
    }
}

fn tail_operator(g: &[f64], monomer: f64, model: &CoefficientModel) -> Vec<f64> {
    let n = g.len();
    (2..n)
        .map(|j| {
            let k = j - 1;
            model.a(j - 1) * monomer * (g[k - 1] - g[k]) + model.b(j) * (g[k + 1] - g[k])
        })
        .collect()
}

/// `a_(j-1) c_1 (G_(j-1) - G_j) + b_j (G_(j+1) - G_j)` for `j = 2..N-1`
/// (entry 0 is `j = 2`).
pub fn tail_rhs(g: &[f64], c1: f64, model: &CoefficientModel) -> Vec<f64> {
    tail_operator(g, c1, model)
}

/// The same operator with the monomer concentration frozen at `omega`;
/// it bounds [`tail_rhs`] from above whenever `c_1 <= omega` and `G` is
/// non-increasing.
pub fn frozen_tail_rhs(g: &[f64], omega: f64, model: &CoefficientModel) -> Vec<f64> {
    tail_operator(g, omega, model)
}

/// `sum_j G_j`; equals `M_1(c)` for the underlying state.
pub fn tail_mass(g: &[f64]) -> f64 {
    compensated_sum(g.iter().copied())
}
