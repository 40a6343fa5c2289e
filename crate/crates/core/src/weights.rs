//! Weight sequences `phi_i` used for moments, weak-form tests and the
//! weighted supersolution bounds.

use serde::{Deserialize, Serialize};

/// A positive weight sequence indexed from `i = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    /// `phi_i = i^k`.
    Power { k: f64 },
    /// `phi_i = exp(alpha i^mu)`.
    StretchedExp { alpha: f64, mu: f64 },
    /// `psi_i = i^(mu-1) exp(alpha i^mu)`, the tail-density companion of the
    /// stretched exponential moment.
    TailPsi { alpha: f64, mu: f64 },
    /// `phi_i = exp(eta i)`.
    Exponential { eta: f64 },
    /// `phi_i = 1`.
    Unit,
}

impl Weight {
    pub fn power(k: f64) -> Self {
        Weight::Power { k }
    }

    pub fn stretched(alpha: f64, mu: f64) -> Self {
        Weight::StretchedExp { alpha, mu }
    }

    pub fn tail_psi(alpha: f64, mu: f64) -> Self {
        Weight::TailPsi { alpha, mu }
    }

    /// Natural logarithm of `phi_i`.
    #[inline]
    pub fn ln_at(&self, i: usize) -> f64 {
        let x = i as f64;
        match *self {
            Weight::Power { k } => k * x.ln(),
            Weight::StretchedExp { alpha, mu } => alpha * x.powf(mu),
            Weight::TailPsi { alpha, mu } => (mu - 1.0) * x.ln() + alpha * x.powf(mu),
            Weight::Exponential { eta } => eta * x,
            Weight::Unit => 0.0,
        }
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match *self {
            Weight::Power { k: 0.0 } => 1.0,
            Weight::Power { k: 1.0 } => i as f64,
            Weight::Power { k: 2.0 } => (i as f64) * (i as f64),
            Weight::Unit => 1.0,
            _ => self.ln_at(i).exp(),
        }
    }

    /// `phi_(i+1) / phi_i - 1`, evaluated without forming the (possibly
    /// overflowing) weights themselves.
    #[inline]
    pub fn relative_increment(&self, i: usize) -> f64 {
        (self.ln_at(i + 1) - self.ln_at(i)).exp_m1()
    }

    /// Weighted sum `sum_i phi_i x_i` over a 1-based sequence stored from
    /// index 0, with compensated accumulation.
    pub fn weighted_sum(&self, x: &[f64]) -> f64 {
        crate::numeric::compensated_sum(
            x.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(idx, &v)| self.at(idx + 1) * v),
        )
    }

    pub fn label(&self) -> String {
        match *self {
            Weight::Power { k } => format!("i^{k}"),
            Weight::StretchedExp { alpha, mu } => format!("exp({alpha}*i^{mu})"),
            Weight::TailPsi { alpha, mu } => format!("i^({mu}-1)*exp({alpha}*i^{mu})"),
            Weight::Exponential { eta } => format!("exp({eta}*i)"),
            Weight::Unit => "1".to_string(),
        }
    }
}
