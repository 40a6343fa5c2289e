//! Randomized supersolution corpus: seeded models and tail profiles, each
//! pushed through construction, verification and the weighted-sum bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::{make_power_law_model, CoefficientModel};
use crate::error::Result;
use crate::supersolution::{
    build_supersolution, verify_supersolution, weighted_sum_bound, SupersolutionParams,
};
use crate::tails::{tail_density, ROUNDOFF_SLACK};
use crate::weights::Weight;

/// Rate family drawn for a case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CorpusModel {
    PowerLaw {
        gamma: f64,
        z_s: f64,
        q: f64,
        mu: f64,
    },
    /// `a_i = 1`, `b_i = z_s`.
    Constant { z_s: f64 },
}

impl CorpusModel {
    pub fn z_s(&self) -> f64 {
        match *self {
            CorpusModel::PowerLaw { z_s, .. } | CorpusModel::Constant { z_s } => z_s,
        }
    }

    pub fn build(&self, n: usize) -> Result<CoefficientModel> {
        match *self {
            CorpusModel::PowerLaw { gamma, z_s, q, mu } => make_power_law_model(gamma, z_s, q, mu),
            CorpusModel::Constant { z_s } => {
                CoefficientModel::from_fn(n, |_| 1.0, move |_| z_s, Some(0.0))
            }
        }
    }
}

/// One drawn case before any checks.
#[derive(Clone, Debug, Serialize)]
pub struct CorpusCase {
    pub index: usize,
    pub model: CorpusModel,
    pub n: usize,
    pub omega: f64,
    pub delta: f64,
    pub rho: f64,
    /// Geometric decay of the generating concentrations.
    pub ratio: f64,
    #[serde(skip)]
    pub g: Vec<f64>,
}

/// Draw case `index` from a ChaCha stream seeded with `seed`. Cases are
/// independent of one another, so any subset can be regenerated.
pub fn draw_case(seed: u64, index: usize) -> CorpusCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let model = if rng.gen_bool(0.75) {
        CorpusModel::PowerLaw {
            gamma: rng.gen_range(0.05..=1.0),
            z_s: rng.gen_range(0.5..=2.0),
            q: rng.gen_range(0.2..=2.0),
            mu: rng.gen_range(0.2..=0.8),
        }
    } else {
        CorpusModel::Constant {
            z_s: rng.gen_range(0.5..=2.0),
        }
    };
    let n = rng.gen_range(200..=400);
    let omega = rng.gen_range(0.1..=0.6) * model.z_s();
    let rho = rng.gen_range(0.2..=3.0);
    let ratio: f64 = rng.gen_range(0.3..0.9);
    let c: Vec<f64> = (1..=n)
        .map(|i| rng.gen_range(0.5..1.5) * ratio.powi(i as i32))
        .collect();
    let mut g = tail_density(&c).g;
    let scale = rho * rng.gen_range(0.1..=1.0) / g[0];
    g.iter_mut().for_each(|v| *v *= scale);
    CorpusCase {
        index,
        model,
        n,
        omega,
        delta: 1.0,
        rho,
        ratio,
        g,
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CorpusChecks {
    pub built: bool,
    pub verified: bool,
    pub dominates: bool,
    pub uniform_bound: bool,
    /// Weighted-sum bound for `phi_j = j`, `j^2` and `exp(sqrt j)`.
    pub weighted_linear: bool,
    pub weighted_quadratic: bool,
    pub weighted_stretched: bool,
}

impl CorpusChecks {
    pub fn all(&self) -> bool {
        self.built
            && self.verified
            && self.dominates
            && self.uniform_bound
            && self.weighted_linear
            && self.weighted_quadratic
            && self.weighted_stretched
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusResult {
    pub case: CorpusCase,
    pub lambda: Option<f64>,
    pub n_switch: Option<usize>,
    pub max_r: Option<f64>,
    pub checks: CorpusChecks,
    pub error: Option<String>,
}

impl CorpusResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.all()
    }
}

/// Run every check on one case. Errors are captured in the result.
pub fn check_case(case: CorpusCase) -> CorpusResult {
    let mut out = CorpusResult {
        case,
        lambda: None,
        n_switch: None,
        max_r: None,
        checks: CorpusChecks::default(),
        error: None,
    };
    if let Err(e) = run_checks(&mut out) {
        out.error = Some(e.to_string());
    }
    out
}

fn run_checks(out: &mut CorpusResult) -> Result<()> {
    let case = &out.case;
    let n = case.n;
    let model = case.model.build(n + 1)?;
    let params = SupersolutionParams::new(
        &model,
        case.model.z_s(),
        case.omega,
        case.rho,
        case.delta,
        n,
    )?;
    let sup = build_supersolution(&model, &params, &case.g)?;
    out.lambda = Some(params.lambda);
    out.n_switch = Some(sup.n_switch_used);
    let max_r = sup.r.iter().copied().fold(0.0, f64::max);
    out.max_r = Some(max_r);
    let checks = &mut out.checks;
    checks.built = true;
    checks.verified =
        verify_supersolution(&sup.r, &model, case.omega, case.rho, 1e-12 * case.rho)?.holds;
    checks.dominates = sup.r.iter().zip(&case.g).all(|(r, g)| r >= g);
    checks.uniform_bound = max_r <= sup.uniform_bound * (1.0 + ROUNDOFF_SLACK);
    checks.weighted_linear = weighted_sum_bound(&sup, &case.g, &Weight::power(1.0))?.holds();
    checks.weighted_quadratic = weighted_sum_bound(&sup, &case.g, &Weight::power(2.0))?.holds();
    checks.weighted_stretched =
        weighted_sum_bound(&sup, &case.g, &Weight::stretched(1.0, 0.5))?.holds();
    Ok(())
}

/// Draw and check `count` cases in parallel; results keep index order.
pub fn run_corpus(seed: u64, count: usize) -> Vec<CorpusResult> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|k| check_case(draw_case(seed, k)))
        .collect()
}
