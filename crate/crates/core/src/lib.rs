//! Numerical toolkit for the Becker-Döring cluster equations.
//!
//! The crate covers the rate models and their detailed-balance equilibria,
//! a mass-conserving truncated integrator, the tail-density transform, a
//! Metzler-matrix comparison principle, constructive supersolutions, and an
//! experiment harness that certifies uniform-in-time bounds on algebraic
//! and stretched-exponential moments.

// `!(x > 0.0)` deliberately rejects NaN; index loops read best in the kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coefficients;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod maximum_principle;
pub mod numeric;
pub mod solver;
pub mod supersolution;
pub mod tails;
pub mod weights;

pub use coefficients::{
    check_assumptions, detailed_balance, make_exponential_tail_model, make_power_law_model,
    AssumptionReport, CoefficientModel, DetailedBalance, Family,
};
pub use equilibrium::{
    critical_values, equilibrium_profile, relative_free_energy, solve_monomer_activity,
    CriticalDensity, CriticalValues, EquilibriumData,
};
pub use error::{Error, Result};
pub use maximum_principle::{
    build_tail_comparison_matrix, check_domination, verify_sign_preservation, DominationReport,
    MetzlerSystem,
};
pub use solver::{
    integrate, net_rates, rhs, ClusterState, IntegrateOptions, NetRates, Snapshot, Trajectory,
};
pub use supersolution::{
    build_supersolution, choose_lambda, verify_supersolution, weighted_sum_bound, Supersolution,
    SupersolutionParams,
};
pub use tails::{stretched_weights, tail_density, tail_moment, StretchedWeights, TailDensity};
pub use weights::Weight;
