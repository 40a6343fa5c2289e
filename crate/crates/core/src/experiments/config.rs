//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{make_exponential_tail_model, make_power_law_model, CoefficientModel};
use crate::equilibrium::EquilibriumData;
use crate::error::{Error, Result};
use crate::solver::ClusterState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
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
    /// Rates read from a `i a_i b_i` file, relative to the config file.
    Custom {
        rates_file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

impl ModelSpec {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<CoefficientModel> {
        match self {
            ModelSpec::PowerLaw { gamma, z_s, q, mu } => {
                make_power_law_model(*gamma, *z_s, *q, *mu)
            }
            ModelSpec::ExponentialTail {
                gamma,
                z_s,
                sigma,
                mu,
            } => make_exponential_tail_model(*gamma, *z_s, *sigma, *mu),
            ModelSpec::Custom { rates_file, gamma } => {
                let path = match base_dir {
                    Some(dir) if rates_file.is_relative() => dir.join(rates_file),
                    _ => rates_file.clone(),
                };
                CoefficientModel::from_rates_file(&path, *gamma)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::PowerLaw { gamma, z_s, q, mu } => {
                format!("power_law(gamma={gamma},z_s={z_s},q={q},mu={mu})")
            }
            ModelSpec::ExponentialTail {
                gamma,
                z_s,
                sigma,
                mu,
            } => {
                format!("exponential_tail(gamma={gamma},z_s={z_s},sigma={sigma},mu={mu})")
            }
            ModelSpec::Custom { rates_file, .. } => format!("custom({})", rates_file.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Monodisperse {
        rho: f64,
    },
    Geometric {
        ratio: f64,
        rho: f64,
    },
    Equilibrium {
        rho: f64,
    },
    /// Raw concentrations, zero-padded to `n`; rescaled when `rho` is given.
    Explicit {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
}

impl InitialSpec {
    /// Target density, if this shape fixes one.
    pub fn rho(&self) -> Option<f64> {
        match self {
            InitialSpec::Monodisperse { rho }
            | InitialSpec::Geometric { rho, .. }
            | InitialSpec::Equilibrium { rho } => Some(*rho),
            InitialSpec::Explicit { rho, .. } => *rho,
        }
    }

    pub fn build(&self, n: usize, equilibrium: Option<&EquilibriumData>) -> Result<ClusterState> {
        match self {
            InitialSpec::Monodisperse { rho } => ClusterState::monodisperse(n, *rho),
            InitialSpec::Geometric { ratio, rho } => ClusterState::geometric(n, *ratio, *rho),
            InitialSpec::Equilibrium { .. } => {
                let eq = equilibrium.ok_or_else(|| {
                    Error::Config("equilibrium initial data needs a subcritical density".into())
                })?;
                ClusterState::equilibrium(eq)
            }
            InitialSpec::Explicit { values, rho } => {
                if values.len() > n {
                    return Err(Error::Config(format!(
                        "{} explicit values exceed the truncation n = {n}",
                        values.len()
                    )));
                }
                let mut c = values.clone();
                c.resize(n, 0.0);
                match rho {
                    Some(r) => ClusterState::scaled(c, *r),
                    None => ClusterState::new(c, 0.0),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Truncation size `N`.
    pub n: usize,
    pub t_end: f64,
    /// Number of output intervals on `[0, t_end]`.
    pub outputs: usize,
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    pub tail_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSpec {
    /// Algebraic moment orders `k`.
    #[serde(default)]
    pub k: Vec<f64>,
    /// Stretched exponential `(alpha, mu)` pairs.
    #[serde(default)]
    pub stretched: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    /// `omega = z_bar + fraction (z_s - z_bar)`.
    Margin {
        fraction: f64,
    },
    Explicit {
        value: f64,
    },
}

impl OmegaSpec {
    pub fn resolve(&self, z_bar: f64, z_s: f64) -> Result<f64> {
        let omega = match *self {
            OmegaSpec::Margin { fraction } => {
                if !(fraction > 0.0 && fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "omega margin fraction {fraction} must lie in (0, 1)"
                    )));
                }
                z_bar + fraction * (z_s - z_bar)
            }
            OmegaSpec::Explicit { value } => value,
        };
        if !(omega > 0.0 && omega < z_s) {
            return Err(Error::Config(format!(
                "omega = {omega} must lie in (0, z_s = {z_s})"
            )));
        }
        Ok(omega)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupersolutionSpec {
    pub delta: f64,
    /// Largest admissible `G_N / rho` at the threshold time.
    pub tol_tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub initial: InitialSpec,
    pub run: RunSpec,
    pub moments: MomentSpec,
    pub omega: OmegaSpec,
    pub supersolution: SupersolutionSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::PowerLaw {
                gamma: 0.5,
                z_s: 1.0,
                q: 1.0,
                mu: 0.5,
            },
            initial: InitialSpec::Monodisperse { rho: 1.0 },
            run: RunSpec {
                n: 2000,
                t_end: 200.0,
                outputs: 400,
                rel_tol: 1e-8,
                abs_tol: None,
                tail_threshold: 1e-6,
            },
            moments: MomentSpec {
                k: vec![2.0],
                stretched: vec![(1.0, 0.5)],
            },
            omega: OmegaSpec::Margin { fraction: 0.1 },
            supersolution: SupersolutionSpec {
                delta: 1.0,
                tol_tail: 1e-6,
            },
            base_dir: None,
        }
    }
}

const TEMPLATE_HEADER: &str = "\
# Experiment configuration.
#
# [model]          family = power_law | exponential_tail | custom
#                  power_law:        gamma, z_s, q, mu
#                  exponential_tail: gamma, z_s, sigma, mu
#                  custom:           rates_file (lines `i a_i b_i`), optional gamma
# [initial]        shape = monodisperse | geometric (ratio) | equilibrium | explicit (values)
#                  rho = target density (optional for explicit)
# [run]            n = truncation, outputs = number of output intervals,
#                  abs_tol defaults to 1e-14 * rho
# [moments]        k = algebraic orders, stretched = [[alpha, mu], ...]
# [omega]          strategy = margin (fraction) | explicit (value)
# [supersolution]  delta >= 1, tol_tail = largest admissible G_N / rho

";

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configs always serialize")
    }

    /// The default configuration with a commented header.
    pub fn template() -> String {
        format!("{TEMPLATE_HEADER}{}", Self::default().to_toml())
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        if run.n < 10 {
            return Err(Error::Config(format!("run.n = {} is below 10", run.n)));
        }
        if !(run.t_end > 0.0 && run.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "run.t_end = {} must be positive",
                run.t_end
            )));
        }
        if run.outputs == 0 {
            return Err(Error::Config("run.outputs must be positive".into()));
        }
        if !(run.rel_tol > 0.0 && run.rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "run.rel_tol = {} must lie in (0, 1)",
                run.rel_tol
            )));
        }
        if run.abs_tol.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("run.abs_tol must be positive".into()));
        }
        if !(run.tail_threshold > 0.0) {
            return Err(Error::Config("run.tail_threshold must be positive".into()));
        }
        if let Some(rho) = self.initial.rho() {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Config(format!(
                    "initial.rho = {rho} must be positive"
                )));
            }
        }
        if self.moments.k.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::Config("moment orders must be non-negative".into()));
        }
        if self
            .moments
            .stretched
            .iter()
            .any(|&(a, m)| !(a > 0.0 && m > 0.0 && m < 1.0))
        {
            return Err(Error::Config(
                "stretched moments need alpha > 0 and 0 < mu < 1".into(),
            ));
        }
        if !(self.supersolution.delta >= 1.0) {
            return Err(Error::Config(
                "supersolution.delta must be at least 1".into(),
            ));
        }
        if !(self.supersolution.tol_tail > 0.0) {
            return Err(Error::Config(
                "supersolution.tol_tail must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<CoefficientModel> {
        self.model.build(self.base_dir.as_deref())
    }
}
