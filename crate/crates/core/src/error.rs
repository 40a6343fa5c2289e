use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} out of range: {expected}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rate table has {available} entries, {requested} requested")]
    TruncationBeyondTable { requested: usize, available: usize },

    #[error(
        "log Q_{index} is not finite; detailed-balance recursion left the representable range"
    )]
    DetailedBalanceOverflow { index: usize },

    #[error("density {rho} is not subcritical (critical density estimate {rho_s})")]
    Supercritical { rho: f64, rho_s: f64 },

    #[error("power series did not resolve to tolerance within {max_terms} terms")]
    SeriesTruncation { max_terms: usize },

    #[error("free energy undefined: c_{index} > 0 while the equilibrium profile vanishes there")]
    FreeEnergyDomain { index: usize },

    #[error(
        "step size underflow at t = {t:e} (h = {h:e}); consider a larger truncation or an implicit integrator"
    )]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {max_steps} steps at t = {t:e}")]
    TooManySteps { max_steps: usize, t: f64 },

    #[error("non-finite state encountered at t = {t:e}")]
    NonFinite { t: f64 },

    #[error("matrix is not Metzler: entry ({row}, {col}) = {value} is negative off the diagonal")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("no switch index: b_j >= lambda*omega*a_(j-1) fails at j = {failing_index} (N_max = {n_max}); omega is too close to z_s for this truncation")]
    NoSwitchIndex { failing_index: usize, n_max: usize },

    #[error("weight sequence violates the growth-ratio condition for delta* = {delta_star}")]
    PhiDecay { delta_star: f64 },

    #[error("sup_i a_i (phi_(i+1) - phi_i) / phi_i is unbounded (growth slope {slope:.3} at the end of the scan)")]
    UnboundedGrowthConstant { slope: f64 },

    #[error(
        "weight sequence has non-positive increments: inf (phi_(i+1) - phi_i) / phi_1 = {epsilon}"
    )]
    NonIncreasingWeight { epsilon: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 10,
            Error::Config(_)
            | Error::ParameterOutOfRange { .. }
            | Error::InvalidInput(_)
            | Error::Supercritical { .. } => 11,
            _ => 12,
        }
    }
}

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value,
            expected,
        })
    }
}
