//! Machine-readable results of an experiment and their on-disk layout.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::pipeline::{rho_s_value, ExperimentOutcome, ShortTimeConstant};
use crate::equilibrium::{CriticalDensity, EquilibriumData};
use crate::error::{Error, Result};
use crate::maximum_principle::DominationReport;
use crate::solver::{IntegrationStats, Trajectory};
use crate::supersolution::{Supersolution, SupersolutionVerdict, WeightedSumBound};
use crate::tails::{tail_density, ROUNDOFF_SLACK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Integrate,
    Threshold,
    ShortTimeBound,
    Supersolution,
    Domination,
    CertifiedBound,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStatus {
    NotRun,
    Found,
    NeverBelow,
    /// Found only in the last tenth of the horizon.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShortTimeCheck {
    pub weight: String,
    pub constant: ShortTimeConstant,
    /// `max_(t <= T0) M_phi(t) / (exp(C_phi t) M_phi(0))`.
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentBound {
    pub weight: String,
    pub certified: f64,
    pub observed_sup: f64,
    pub observed_sup_after_t0: f64,
    pub weighted_sum: WeightedSumBound,
    /// `open` or `boundary` for stretched exponentials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    pub passed: bool,
}

impl MomentBound {
    pub(crate) fn new(
        weight: String,
        certified: f64,
        trajectory: &Trajectory,
        t0_index: usize,
        observed: impl Iterator<Item = f64>,
        weighted_sum: WeightedSumBound,
    ) -> Self {
        let values: Vec<f64> = observed.collect();
        debug_assert_eq!(values.len(), trajectory.snapshots.len());
        let observed_sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let observed_sup_after_t0 = values[t0_index..]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let passed =
            observed_sup_after_t0 <= certified * (1.0 + ROUNDOFF_SLACK) && weighted_sum.holds();
        Self {
            weight,
            certified,
            observed_sup,
            observed_sup_after_t0,
            weighted_sum,
            regime: None,
            passed,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceSummary {
    /// `sum_i i |c_i - Q_i|` at the first and last snapshot.
    pub initial_distance: f64,
    pub final_distance: f64,
    pub eventually_decreasing: bool,
}

/// Full record of one run. Contains no wall-clock data, so identical
/// inputs give byte-identical output.
#[derive(Clone, Debug, Serialize)]
pub struct UniformBoundReport {
    pub model: String,
    pub config: ExperimentConfig,
    pub z_s: f64,
    pub rho_s: CriticalDensity,
    pub z_bar: f64,
    pub rho: f64,
    pub omega: f64,
    pub stages: Vec<StageOutcome>,
    pub threshold: ThresholdStatus,
    pub t0: Option<f64>,
    pub short_time: Vec<ShortTimeCheck>,
    pub supersolution: Option<serde_json::Value>,
    pub supersolution_verdict: Option<SupersolutionVerdict>,
    pub domination: Option<DominationReport>,
    pub moment_bounds: Vec<MomentBound>,
    pub convergence: Option<ConvergenceSummary>,
    pub mass_drift: f64,
    pub integration: Option<IntegrationStats>,
    pub warnings: Vec<String>,
    pub verdict: bool,
    pub failed_stage: Option<Stage>,
}

impl UniformBoundReport {
    pub(crate) fn new(
        config: &ExperimentConfig,
        eq: &EquilibriumData,
        rho: f64,
        omega: f64,
    ) -> Self {
        Self {
            model: config.model.label(),
            config: config.clone(),
            z_s: eq.z_s,
            rho_s: eq.rho_s,
            z_bar: eq.z_bar,
            rho,
            omega,
            stages: Vec::new(),
            threshold: ThresholdStatus::NotRun,
            t0: None,
            short_time: Vec::new(),
            supersolution: None,
            supersolution_verdict: None,
            domination: None,
            moment_bounds: Vec::new(),
            convergence: None,
            mass_drift: 0.0,
            integration: None,
            warnings: Vec::new(),
            verdict: false,
            failed_stage: None,
        }
    }

    pub(crate) fn stage(&mut self, stage: Stage, passed: bool, detail: String) {
        if passed {
            log::info!("{stage:?}: {detail}");
        } else {
            log::warn!("{stage:?} failed: {detail}");
        }
        self.stages.push(StageOutcome {
            stage,
            passed,
            detail,
        });
    }

    pub(crate) fn finish(
        mut self,
        trajectory: Option<Trajectory>,
        supersolution: Option<Supersolution>,
        equilibrium: Arc<EquilibriumData>,
    ) -> ExperimentOutcome {
        self.failed_stage = self.stages.iter().find(|s| !s.passed).map(|s| s.stage);
        self.verdict = self.failed_stage.is_none()
            && self.stages.last().map(|s| s.stage) == Some(Stage::CertifiedBound);
        ExperimentOutcome {
            report: self,
            trajectory,
            supersolution,
            equilibrium,
        }
    }

    /// 0 when every stage passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.verdict {
            0
        } else {
            2
        }
    }

    /// `#key=value` lines for CSV headers.
    pub fn header(&self) -> Vec<(String, String)> {
        vec![
            ("model".into(), self.model.clone()),
            ("rho".into(), format!("{}", self.rho)),
            ("z_s".into(), format!("{}", self.z_s)),
            ("rho_s".into(), format!("{}", rho_s_value(self.rho_s))),
            ("z_bar".into(), format!("{}", self.z_bar)),
            ("omega".into(), format!("{}", self.omega)),
            ("N".into(), format!("{}", self.config.run.n)),
        ]
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `summary.json`, `trajectory.csv`, `supersolution.csv`,
/// `tail_t0.csv` and `plot.dat` into an existing directory. Files whose
/// stage was never reached are skipped.
pub fn emit_report(outcome: &ExperimentOutcome, out_dir: &Path) -> Result<()> {
    if !out_dir.is_dir() {
        return Err(Error::io(
            out_dir,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        ));
    }
    let report = &outcome.report;
    let json = serde_json::to_string_pretty(report)?;
    write(&out_dir.join("summary.json"), &(json + "\n"))?;
    let header = report.header();
    if let Some(traj) = &outcome.trajectory {
        traj.write_csv(&out_dir.join("trajectory.csv"), &header)?;
        write(&out_dir.join("plot.dat"), &plot_data(report, traj))?;
        if let Some(t0) = report.t0 {
            if let Some(snap) = traj.snapshots.iter().find(|s| s.t == t0) {
                tail_density(&snap.c).write_csv(&out_dir.join("tail_t0.csv"))?;
            }
        }
    }
    if let Some(sup) = &outcome.supersolution {
        write(&out_dir.join("supersolution.csv"), &sup.to_csv())?;
    }
    Ok(())
}

/// Whitespace-separated columns for gnuplot: time, `c_1`, `omega`, then each
/// recorded moment next to its certified bound (`nan` before `T0` or when
/// no bound was certified).
fn plot_data(report: &UniformBoundReport, traj: &Trajectory) -> String {
    let labels: Vec<String> = traj
        .moment_orders
        .iter()
        .map(|k| format!("M_{k}"))
        .chain(
            traj.stretched_params
                .iter()
                .map(|(a, m)| format!("E_{a}_{m}")),
        )
        .collect();
    let mut out = String::from("# t c1 omega");
    for l in &labels {
        let _ = write!(out, " {l} {l}_bound");
    }
    out.push('\n');
    let bound = |label: &str| {
        report
            .moment_bounds
            .iter()
            .find(|b| b.weight == label)
            .map(|b| b.certified)
    };
    for s in &traj.snapshots {
        let _ = write!(out, "{:.10e} {:.10e} {:.10e}", s.t, s.c1, report.omega);
        for (v, l) in s.moments.iter().chain(&s.stretched).zip(&labels) {
            let b = match (bound(l), report.t0) {
                (Some(b), Some(t0)) if s.t >= t0 => b,
                _ => f64::NAN,
            };
            let _ = write!(out, " {v:.10e} {b:.10e}");
        }
        out.push('\n');
    }
    out
}
