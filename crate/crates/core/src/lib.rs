//! Labeling-aware analysis of Boole/Bell-type inequalities.
//!
//! An inequality such as `A_a A_b + A_a A_c + A_b A_c >= -1` only binds when
//! the same logical variable appears in several product terms. Whether two
//! measured outcomes count as the same variable is decided by a
//! [`LabelingScheme`]. This crate computes tight bounds of product sums under
//! each scheme, detects the shared-variable cycles that make them nontrivial,
//! decides whether target correlations admit one joint distribution, and
//! simulates outcome models event by event to compare data against the bounds.

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod domain;
pub mod engine;
pub mod experiment;
pub mod feasibility;
pub mod labeling;
pub mod models;
pub mod scenarios;

pub use analysis::{
    gamma_per_trial, mean_correlations, verdict, CorrelationReport, Verdict, VerdictStatus,
};
pub use bounds::{
    detect_cyclicity, enumerate_bounds, evaluate, BoundResult, CyclicityReport, Expression, Slot,
    Term,
};
pub use domain::{
    validate_schedule, Observation, OutcomeValue, Protocol, Schedule, Setting, SettingId,
    StationId, TimeIndex, TrialLog,
};
pub use engine::{run, RunConfig, TermRotation};
pub use experiment::{Experiment, ExperimentDef};
pub use feasibility::{check_feasibility, FeasibilityProblem, FeasibilityVerdict};
pub use labeling::{distinct_variable_count, label, LabelingScheme, LogicalVariableId};
pub use models::{singlet_correlation, Model};
pub use scenarios::{list_scenarios, run_scenario, Overrides, Report};
