//! Built-in experiments with their expected verdicts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, CorrelationReport, VerdictStatus};
use crate::bounds::{self, BoundResult, BoundsError, CyclicityReport, Expression};
use crate::domain::{Protocol, Setting, SettingId, StationId, TrialLog};
use crate::engine::{self, EngineError, RunConfig, TermRotation, DEFAULT_SEED};
use crate::experiment::{Experiment, ExperimentDef, ExperimentError};
use crate::labeling::LabelingScheme;
use crate::models::{
    EquipmentTimeParamModel, EvenOddCityModel, IidHiddenVariableModel, JointTripleModel, Model,
    QuantumSingletModel,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}; see `tertium run --list`")]
    Unknown(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub scheme: LabelingScheme,
    pub bound_min: i64,
    pub status: VerdictStatus,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    /// One-line summary of who measures what, and when.
    pub setup: &'static str,
    pub experiment: ExperimentDef,
    pub defaults: RunConfig,
    pub expected: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub description: String,
    pub setup: String,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub rotation: Option<TermRotation>,
    pub threads: Option<usize>,
    /// Restrict bounds and verdicts to one scheme.
    pub labeling: Option<LabelingScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub model: String,
    pub expression: String,
    pub config: RunConfig,
    pub correlations: CorrelationReport,
    pub bounds: Vec<BoundResult>,
    pub cyclicity: Vec<CyclicityReport>,
}

impl Report {
    pub fn any_violated(&self) -> bool {
        self.correlations
            .verdicts
            .iter()
            .any(|v| v.verdict.status == VerdictStatus::Violated)
    }

    /// Expectations that this report contradicts.
    pub fn unmet<'a>(&self, expected: &'a [Expectation]) -> Vec<&'a Expectation> {
        expected
            .iter()
            .filter(|e| {
                self.correlations
                    .verdict_for(e.scheme)
                    .is_some_and(|v| v.bound_min != e.bound_min || v.verdict.status != e.status)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: Report,
    pub log: TrialLog,
}

fn ids<const N: usize>(names: [&str; N]) -> [SettingId; N] {
    names.map(|s| SettingId::new(s).expect("id"))
}

fn stations(names: &[&str]) -> Vec<StationId> {
    names
        .iter()
        .map(|s| StationId::new(*s).expect("id"))
        .collect()
}

fn plain_settings() -> Vec<Setting> {
    ids(["a", "b", "c"])
        .into_iter()
        .map(Setting::plain)
        .collect()
}

/// Three directions with every pair at 60 degrees.
pub fn pairwise_sixty_settings() -> Vec<Setting> {
    let [a, b, c] = ids(["a", "b", "c"]);
    let s3 = 3f64.sqrt();
    vec![
        Setting::with_direction(a, [1.0, 0.0, 0.0]).expect("unit"),
        Setting::with_direction(b, [0.5, s3 / 2.0, 0.0]).expect("unit"),
        Setting::with_direction(c, [0.5, s3 / 6.0, (2.0f64 / 3.0).sqrt()]).expect("unit"),
    ]
}

fn expect(rows: &[(LabelingScheme, i64, VerdictStatus)]) -> Vec<Expectation> {
    rows.iter()
        .map(|&(scheme, bound_min, status)| Expectation {
            scheme,
            bound_min,
            status,
        })
        .collect()
}

use LabelingScheme::*;
use VerdictStatus::*;

fn two_city_expectations() -> Vec<Expectation> {
    expect(&[
        (SettingOnly, -1, Violated),
        (SettingStation, -3, Respected),
        (SettingStationParity, -3, Respected),
        (SettingStationTime, -3, Respected),
        (FullyDistinct, -3, Respected),
    ])
}

fn co_dated_expectations() -> Vec<Expectation> {
    expect(&[
        (SettingOnly, -1, Respected),
        (SettingStation, -1, Respected),
        (SettingStationParity, -1, Respected),
        (SettingStationTime, -1, Respected),
        (FullyDistinct, -3, Respected),
    ])
}

fn three_doctors() -> Scenario {
    let expression = Expression::leggett_garg_three_station();
    Scenario {
        name: "three-doctors",
        description: "Three doctors, one birthplace each, examine one patient per date; \
                      the pair products of one date always sum to at least -1.",
        setup: "Lille: a, Lyon: b, Paris: c, all on every date",
        experiment: ExperimentDef {
            name: Some("three-doctors".into()),
            settings: plain_settings(),
            stations: stations(&["Lille", "Lyon", "Paris"]),
            schedule: Protocol::all_terms_per_date(&expression),
            expression,
            model: Model::IidHiddenVariable(IidHiddenVariableModel::symmetric(&ids([
                "a", "b", "c",
            ]))),
            labeling: None,
        },
        defaults: RunConfig::new(10_000, DEFAULT_SEED),
        expected: co_dated_expectations(),
    }
}

fn two_doctors_evenodd() -> Scenario {
    let expression = Expression::leggett_garg_two_station();
    Scenario {
        name: "two-doctors-evenodd",
        description: "Two doctors; Lille examines a or b, Lyon b or c, one pair per date. \
                      Signs depend on city and date parity: every pair product is -1 while \
                      every single outcome looks like a fair coin.",
        setup: "Lille: a|b, Lyon: b|c, one term per date",
        experiment: ExperimentDef {
            name: Some("two-doctors-evenodd".into()),
            settings: plain_settings(),
            stations: stations(&["Lille", "Lyon"]),
            schedule: Protocol::one_term_per_date(&expression),
            expression,
            model: Model::EvenOddCity(EvenOddCityModel::two_cities()),
            labeling: None,
        },
        defaults: RunConfig::new(10_000, DEFAULT_SEED),
        expected: two_city_expectations(),
    }
}

fn equipment_time_params() -> Scenario {
    let mut s = two_doctors_evenodd();
    s.name = "equipment-time-params";
    s.description = "The two-doctor schedule driven by period-2 device parameters \
                     lambda_s(t) instead of a fixed city/parity table; same outcomes.";
    s.setup = "Lille: a|b, Lyon: b|c, one term per date, parameters periodic in t";
    s.experiment.name = Some("equipment-time-params".into());
    s.experiment.model = Model::EquipmentTimeParam(EquipmentTimeParamModel::two_cities());
    s
}

fn bell_lambda() -> Scenario {
    let expression = Expression::leggett_garg_two_station();
    // Uniform over the six non-constant sign patterns: each gives a sum of
    // exactly -1, the tightest a shared hidden variable can reach.
    let settings = ids(["a", "b", "c"]);
    let mut states = IidHiddenVariableModel::symmetric(&settings)
        .states
        .into_iter()
        .filter(|s| {
            let v: Vec<i64> = s.responses.values().map(|x| x.get()).collect();
            !(v.iter().all(|&x| x == 1) || v.iter().all(|&x| x == -1))
        })
        .map(|mut s| {
            s.probability = 1.0 / 6.0;
            s
        })
        .collect::<Vec<_>>();
    // Make the probabilities sum to exactly 1.
    let rest: f64 = states[..5].iter().map(|s| s.probability).sum();
    states[5].probability = 1.0 - rest;
    Scenario {
        name: "bell-lambda",
        description: "The two-doctor schedule driven by one source-borne hidden variable \
                      shared by both stations; outcomes depend on setting and lambda only, \
                      so the setting-only bound of -1 holds.",
        setup: "Lille: a|b, Lyon: b|c, one term per date, lambda drawn per date",
        experiment: ExperimentDef {
            name: Some("bell-lambda".into()),
            settings: plain_settings(),
            stations: stations(&["Lille", "Lyon"]),
            schedule: Protocol::one_term_per_date(&expression),
            expression,
            model: Model::IidHiddenVariable(IidHiddenVariableModel { states }),
            labeling: None,
        },
        defaults: RunConfig::new(30_000, DEFAULT_SEED),
        expected: expect(&[
            (SettingOnly, -1, Respected),
            (SettingStation, -3, Respected),
            (SettingStationParity, -3, Respected),
            (SettingStationTime, -3, Respected),
            (FullyDistinct, -3, Respected),
        ]),
    }
}

fn quantum_triple() -> Scenario {
    let expression: Expression = "a@P1*b@P2:0 + a@P1*c@P3:0 + b@P2*c@P3:0"
        .parse()
        .expect("valid");
    Scenario {
        name: "quantum-triple",
        description: "Three particles measured together, one setting each, at every time; \
                      any joint distribution of the three outcomes keeps the sum at or above -1.",
        setup: "P1: a, P2: b, P3: c, all on every date",
        experiment: ExperimentDef {
            name: Some("quantum-triple".into()),
            settings: plain_settings(),
            stations: stations(&["P1", "P2", "P3"]),
            schedule: Protocol::all_terms_per_date(&expression),
            expression,
            model: Model::JointTriple(JointTripleModel::uniform(ids(["a", "b", "c"]))),
            labeling: None,
        },
        defaults: RunConfig::new(100_000, DEFAULT_SEED),
        expected: co_dated_expectations(),
    }
}

fn quantum_singlet_pairs() -> Scenario {
    let expression = Expression::leggett_garg_station_pairs();
    Scenario {
        name: "quantum-singlet-pairs",
        description: "Singlet pairs measured by three station pairs (n, m, l) with setting \
                      directions pairwise at 60 degrees; each correlation is -1/2 and the \
                      sum -3/2.",
        setup: "nL: a, nR: b | mL: a, mR: c | lL: b, lR: c, one pair per date",
        experiment: ExperimentDef {
            name: Some("quantum-singlet-pairs".into()),
            settings: pairwise_sixty_settings(),
            stations: stations(&["nL", "nR", "mL", "mR", "lL", "lR"]),
            schedule: Protocol::one_term_per_date(&expression),
            expression,
            model: Model::QuantumSinglet(QuantumSingletModel {}),
            labeling: None,
        },
        defaults: RunConfig::new(300_000, DEFAULT_SEED),
        expected: two_city_expectations(),
    }
}

/// Every built-in scenario, in a stable order.
pub fn registry() -> Vec<Scenario> {
    vec![
        three_doctors(),
        two_doctors_evenodd(),
        equipment_time_params(),
        bell_lambda(),
        quantum_triple(),
        quantum_singlet_pairs(),
    ]
}

pub fn list_scenarios() -> Vec<ScenarioInfo> {
    registry()
        .into_iter()
        .map(|s| ScenarioInfo {
            name: s.name.to_string(),
            description: s.description.to_string(),
            setup: s.setup.to_string(),
        })
        .collect()
}

pub fn get(name: &str) -> Result<Scenario, ScenarioError> {
    registry()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

/// Runs any validated experiment and assembles the full report.
pub fn run_experiment(
    name: &str,
    experiment: &Experiment,
    config: &RunConfig,
    schemes: &[LabelingScheme],
) -> Result<ScenarioRun, ScenarioError> {
    let log = engine::run(experiment, config)?;
    let expr = experiment.expression();
    let mut correlations = analysis::mean_correlations(&log, expr)?;
    let mut bound_results = Vec::with_capacity(schemes.len());
    let mut cyclicity = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let b = bounds::enumerate_bounds(expr, scheme)?;
        correlations.judge(&b);
        bound_results.push(b);
        cyclicity.push(bounds::detect_cyclicity(expr, scheme));
    }
    Ok(ScenarioRun {
        report: Report {
            scenario: name.to_string(),
            model: experiment.model().name().to_string(),
            expression: expr.to_string(),
            config: config.clone(),
            correlations,
            bounds: bound_results,
            cyclicity,
        },
        log,
    })
}

pub fn run_scenario(name: &str, overrides: &Overrides) -> Result<ScenarioRun, ScenarioError> {
    let scenario = get(name)?;
    let experiment = Experiment::new(scenario.experiment.clone())?;
    let mut config = scenario.defaults.clone();
    if let Some(n) = overrides.trials {
        config.trials = n;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(r) = overrides.rotation {
        config.rotation = r;
    }
    config.threads = overrides.threads;
    let schemes: Vec<LabelingScheme> = match overrides.labeling {
        Some(s) => vec![s],
        None => LabelingScheme::ALL.to_vec(),
    };
    run_experiment(scenario.name, &experiment, &config, &schemes)
}
