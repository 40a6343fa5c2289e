//! End-to-end experiments: configuration, the staged uniform-bound
//! pipeline, report emission and the randomized supersolution corpus.

pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod report;

pub use config::{
    ExperimentConfig, InitialSpec, ModelSpec, MomentSpec, OmegaSpec, RunSpec, SupersolutionSpec,
};
pub use corpus::{
    check_case, draw_case, run_corpus, CorpusCase, CorpusChecks, CorpusModel, CorpusResult,
};
pub use pipeline::{
    detect_threshold, equilibrium_distance, prepare, run_sweep, run_uniform_moment_experiment,
    short_time_constant, supersolution_for_profile, ExperimentOutcome, Setup, ShortTimeConstant,
    Threshold,
};
pub use report::{
    emit_report, MomentBound, Stage, StageOutcome, ThresholdStatus, UniformBoundReport,
};
