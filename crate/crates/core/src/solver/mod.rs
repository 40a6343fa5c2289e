//! The truncated Becker-Döring system and its time integration.
//!
//! Sizes run over `1..=N`; the flux past size `N` is closed off
//! (`W_N = 0`), which makes `sum_i i c_i` an exact invariant of the
//! truncated dynamics.

mod integrator;
mod trajectory;

pub use integrator::{dopri5, IntegrationStats, OdeSystem, Positivity, StepperOptions};
pub use trajectory::{
    integrate, uniform_grid, weak_form_residual, IntegrateOptions, Snapshot, Trajectory,
};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::equilibrium::EquilibriumData;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::weights::Weight;

/// Concentrations `c_1..c_N` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub c: Vec<f64>,
    pub t: f64,
}

impl ClusterState {
    pub fn new(c: Vec<f64>, t: f64) -> Result<Self> {
        if c.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a state needs at least two sizes, got {}",
                c.len()
            )));
        }
        if let Some(k) = c.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "concentration c_{} = {} is not a non-negative number",
                k + 1,
                c[k]
            )));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid time {t}")));
        }
        Ok(Self { c, t })
    }

    /// All mass in monomers: `c = (rho, 0, ..., 0)`.
    pub fn monodisperse(n: usize, rho: f64) -> Result<Self> {
        let mut c = vec![0.0; n.max(2)];
        c[0] = rho;
        Self::new(c, 0.0)
    }

    /// `c_i` proportional to `ratio^i`, scaled to density `rho`.
    pub fn geometric(n: usize, ratio: f64, rho: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::ParameterOutOfRange {
                name: "ratio",
                value: ratio,
                expected: "0 < ratio < 1",
            });
        }
        let shape: Vec<f64> = (1..=n).map(|i| ratio.powi(i as i32)).collect();
        Self::scaled(shape, rho)
    }

    /// The equilibrium profile as an initial state.
    pub fn equilibrium(eq: &EquilibriumData) -> Result<Self> {
        Self::new(eq.profile.clone(), 0.0)
    }

    /// `shape` rescaled so that its density is exactly `rho`.
    pub fn scaled(shape: Vec<f64>, rho: f64) -> Result<Self> {
        let mut state = Self::new(shape, 0.0)?;
        let current = state.density();
        if current <= 0.0 {
            return Err(Error::InvalidInput("initial shape carries no mass".into()));
        }
        let f = rho / current;
        state.c.iter_mut().for_each(|v| *v *= f);
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn density(&self) -> f64 {
        density(&self.c)
    }
}

/// `sum_i i c_i`.
pub fn density(c: &[f64]) -> f64 {
    compensated_sum(c.iter().enumerate().map(|(k, &v)| (k + 1) as f64 * v))
}

/// `M_k = sum_i i^k c_i`.
pub fn moment(c: &[f64], k: f64) -> f64 {
    Weight::power(k).weighted_sum(c)
}

/// `E = sum_i exp(alpha i^mu) c_i`.
pub fn stretched_moment(c: &[f64], alpha: f64, mu: f64) -> f64 {
    Weight::stretched(alpha, mu).weighted_sum(c)
}

/// Net fluxes `W_1..W_N` with `W_N = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetRates {
    pub w: Vec<f64>,
}

pub fn net_rates(state: &ClusterState, model: &CoefficientModel) -> Result<NetRates> {
    let n = state.len();
    model.ensure_range(n)?;
    let c = &state.c;
    let mut w = vec![0.0; n];
    for i in 1..n {
        w[i - 1] = model.a(i) * c[0] * c[i - 1] - model.b(i + 1) * c[i];
    }
    Ok(NetRates { w })
}

/// `dc/dt` of the truncated system.
pub fn rhs(state: &ClusterState, model: &CoefficientModel) -> Result<Vec<f64>> {
    let sys = BeckerDoringSystem::new(model, state.len())?;
    let mut dc = vec![0.0; state.len()];
    sys.rhs(state.t, &state.c, &mut dc);
    Ok(dc)
}

/// Tabulated rates for fast right-hand-side evaluation.
#[derive(Clone, Debug)]
pub struct BeckerDoringSystem {
    /// `a[k] = a_(k+1)`
    a: Vec<f64>,
    /// `b[k] = b_(k+1)`
    b: Vec<f64>,
}

impl BeckerDoringSystem {
    pub fn new(model: &CoefficientModel, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "truncation N = {n} is below 2"
            )));
        }
        let (a, b) = model.tabulate(n)?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

impl OdeSystem for BeckerDoringSystem {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn rhs(&self, _t: f64, c: &[f64], dc: &mut [f64]) {
        let n = c.len();
        let c1 = c[0];
        let mut total = CompensatedSum::new();
        let mut w_prev = 0.0;
        let mut w_first = 0.0;
        for k in 0..n - 1 {
            let w = self.a[k] * c1 * c[k] - self.b[k + 1] * c[k + 1];
            if k == 0 {
                w_first = w;
            } else {
                dc[k] = w_prev - w;
            }
            total.add(w);
            w_prev = w;
        }
        dc[n - 1] = w_prev;
        dc[0] = -w_first - total.value();
    }
}
