//! Comparison principle for linear systems `u' = A u + s` whose matrix has
//! non-negative off-diagonal entries, and the tail domination check built
//! on it.

use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{check_range, Error, Result};
use crate::solver::{dopri5, uniform_grid, OdeSystem, Positivity, StepperOptions, Trajectory};
use crate::tails::tail_density;

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    /// Row-major.
    Dense(Vec<f64>),
    /// `sub[i] = A[i][i-1]` (unused at `i = 0`), `sup[i] = A[i][i+1]`
    /// (unused at `i = n-1`).
    Tridiagonal {
        sub: Vec<f64>,
        diag: Vec<f64>,
        sup: Vec<f64>,
    },
}

/// A Metzler matrix together with its maximal absolute row sum.
#[derive(Clone, Debug, PartialEq)]
pub struct MetzlerSystem {
    n: usize,
    storage: Storage,
    row_abs_sum: f64,
    /// Index of the first unknown, for matrices acting on `j_lo..=j_hi`.
    pub first_index: usize,
}

impl MetzlerSystem {
    pub fn dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(
                "matrix must be square and non-empty".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("entry ({i}, {j}) is {v}")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::NotMetzler {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        let row_abs_sum = rows
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            n,
            storage: Storage::Dense(rows.into_iter().flatten().collect()),
            row_abs_sum,
            first_index: 0,
        })
    }

    pub fn tridiagonal(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() != n || sup.len() != n {
            return Err(Error::InvalidInput("band lengths must all equal n".into()));
        }
        for i in 0..n {
            if i > 0 && sub[i] < 0.0 {
                return Err(Error::NotMetzler {
                    row: i,
                    col: i - 1,
                    value: sub[i],
                });
            }
            if i + 1 < n && sup[i] < 0.0 {
                return Err(Error::NotMetzler {
                    row: i,
                    col: i + 1,
                    value: sup[i],
                });
            }
        }
        let row_abs_sum = (0..n)
            .map(|i| {
                let l = if i > 0 { sub[i].abs() } else { 0.0 };
                let u = if i + 1 < n { sup[i].abs() } else { 0.0 };
                l + diag[i].abs() + u
            })
            .fold(0.0, f64::max);
        Ok(Self {
            n,
            storage: Storage::Tridiagonal { sub, diag, sup },
            row_abs_sum,
            first_index: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `C = max_i sum_j |a_ij|`.
    pub fn row_abs_sum(&self) -> f64 {
        self.row_abs_sum
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(a) => a[i * self.n + j],
            Storage::Tridiagonal { sub, diag, sup } => {
                if i == j {
                    diag[i]
                } else if i == j + 1 {
                    sub[i]
                } else if j == i + 1 {
                    sup[i]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `out = A u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        match &self.storage {
            Storage::Dense(a) => {
                for i in 0..n {
                    out[i] = a[i * n..(i + 1) * n]
                        .iter()
                        .zip(u)
                        .map(|(x, y)| x * y)
                        .sum();
                }
            }
            Storage::Tridiagonal { sub, diag, sup } => {
                for i in 0..n {
                    let mut v = diag[i] * u[i];
                    if i > 0 {
                        v += sub[i] * u[i - 1];
                    }
                    if i + 1 < n {
                        v += sup[i] * u[i + 1];
                    }
                    out[i] = v;
                }
            }
        }
    }
}

/// Rows `(a_(j-1) omega, -(a_(j-1) omega + b_j), b_j)` for `j = j_lo..=j_hi`.
pub fn build_tail_comparison_matrix(
    model: &CoefficientModel,
    omega: f64,
    j_lo: usize,
    j_hi: usize,
) -> Result<MetzlerSystem> {
    check_range("omega", omega, omega > 0.0, "omega > 0")?;
    if j_lo < 2 || j_hi < j_lo {
        return Err(Error::InvalidInput(format!(
            "index range {j_lo}..={j_hi} must satisfy 2 <= j_lo <= j_hi"
        )));
    }
    model.ensure_range(j_hi)?;
    let len = j_hi - j_lo + 1;
    let mut sub = vec![0.0; len];
    let mut diag = vec![0.0; len];
    let mut sup = vec![0.0; len];
    for (k, j) in (j_lo..=j_hi).enumerate() {
        let gain = model.a(j - 1) * omega;
        let loss = model.b(j);
        sub[k] = gain;
        diag[k] = -(gain + loss);
        sup[k] = loss;
    }
    let mut sys = MetzlerSystem::tridiagonal(sub, diag, sup)?;
    sys.first_index = j_lo;
    Ok(sys)
}

struct Forced<'a> {
    sys: &'a MetzlerSystem,
    slack: Option<&'a [f64]>,
}

impl OdeSystem for Forced<'_> {
    fn dim(&self) -> usize {
        self.sys.n
    }

    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        self.sys.apply(u, du);
        if let Some(s) = self.slack {
            du.iter_mut().zip(s).for_each(|(d, s)| *d += s);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SignReport {
    /// `max_t max_j u_j(t) <= tolerance`.
    pub holds: bool,
    pub tolerance: f64,
    pub worst: f64,
    pub row_abs_sum: f64,
    /// `(t, max_j u_j(t))`.
    pub max_component: Vec<(f64, f64)>,
    /// `(t, sum_j max(u_j(t), 0))`.
    pub positive_part: Vec<(f64, f64)>,
    #[serde(skip)]
    pub final_state: Vec<f64>,
}

impl SignReport {
    /// `y(t) <= y(0) exp(C t)` along the trace, with a relative allowance
    /// `rel` for integration error.
    pub fn gronwall_holds(&self, rel: f64) -> bool {
        let y0 = self.positive_part[0].1;
        self.positive_part.iter().all(|&(t, y)| {
            let bound = y0 * (self.row_abs_sum * t).exp();
            y <= bound * (1.0 + rel) + self.tolerance
        })
    }
}

/// Integrate `u' = A u + slack` from `u0` and record the largest component.
///
/// Sign preservation is asserted relative to `1e-9 max_j |u0_j|`.
pub fn verify_sign_preservation(
    system: &MetzlerSystem,
    u0: &[f64],
    t_end: f64,
    slack: Option<&[f64]>,
) -> Result<SignReport> {
    let n = system.n;
    if u0.len() != n || slack.is_some_and(|s| s.len() != n) {
        return Err(Error::InvalidInput(
            "vector lengths must match the matrix".into(),
        ));
    }
    let norm = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = 1e-9 * norm.max(f64::MIN_POSITIVE);
    let opts = StepperOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-15 * norm.max(f64::MIN_POSITIVE),
        positivity: Positivity::Unconstrained,
        ..Default::default()
    };
    let forced = Forced { sys: system, slack };
    let mut max_component = Vec::new();
    let mut positive_part = Vec::new();
    let times = uniform_grid(0.0, t_end, 100);
    let (final_state, _) = dopri5(&forced, 0.0, u0, &times, &opts, |t, u| {
        max_component.push((t, u.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        positive_part.push((t, u.iter().map(|v| v.max(0.0)).sum()));
        Ok(())
    })?;
    let worst = max_component
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SignReport {
        holds: worst <= tolerance,
        tolerance,
        worst,
        row_abs_sum: system.row_abs_sum,
        max_component,
        positive_part,
        final_state,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub j: usize,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub first_violation: Option<Violation>,
    /// `max_(t >= t_start) max_j (G_j(t) - r_j)`.
    pub max_gap: f64,
    pub epsilon_used: f64,
    pub snapshots_checked: usize,
}

impl DominationReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Check `G_j(t) <= r_j + tol` for every snapshot at or after `t_start`.
pub fn check_domination(
    trajectory: &Trajectory,
    r: &[f64],
    t_start: f64,
    tol: f64,
) -> Result<DominationReport> {
    let mut report = DominationReport {
        first_violation: None,
        max_gap: f64::NEG_INFINITY,
        epsilon_used: tol,
        snapshots_checked: 0,
    };
    for snap in trajectory.snapshots.iter().filter(|s| s.t >= t_start) {
        if r.len() < snap.c.len() {
            return Err(Error::InvalidInput(format!(
                "supersolution has {} entries, state {}",
                r.len(),
                snap.c.len()
            )));
        }
        let g = tail_density(&snap.c);
        for (k, (gj, rj)) in g.g.iter().zip(r).enumerate() {
            let gap = gj - rj;
            if gap > report.max_gap {
                report.max_gap = gap;
            }
            if gap > tol && report.first_violation.is_none() {
                report.first_violation = Some(Violation {
                    t: snap.t,
                    j: k + 1,
                    gap,
                });
            }
        }
        report.snapshots_checked += 1;
    }
    Ok(report)
}
