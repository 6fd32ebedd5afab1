//! Runs a model against a schedule and records every outcome.
//!
//! Randomness for time index `t` comes from a ChaCha8 stream selected by `t`
//! under the run seed, so trials can be generated on any number of threads
//! and the log is still identical.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Expression;
use crate::domain::{
    validate_schedule, Observation, Protocol, Schedule, Setting, SettingId, TrialLog,
};
use crate::experiment::{join_violations, Experiment};
use crate::models::{Model, ModelError};

/// Default seed for every run that does not name one.
pub const DEFAULT_SEED: u64 = 42;
const ROTATION_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("model failed at t={time}: {source}")]
    Model { time: u64, source: ModelError },
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermRotation {
    /// Time index `t` gets group `t mod G`.
    #[default]
    RoundRobin,
    /// Each time index draws its group uniformly from `(seed, t)`.
    UniformRandom,
}

impl FromStr for TermRotation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round-robin" => Ok(TermRotation::RoundRobin),
            "uniform-random" => Ok(TermRotation::UniformRandom),
            other => Err(format!(
                "unknown rotation {other:?} (round-robin | uniform-random)"
            )),
        }
    }
}

impl fmt::Display for TermRotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermRotation::RoundRobin => "round-robin",
            TermRotation::UniformRandom => "uniform-random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub rotation: TermRotation,
    /// Worker threads; `None` uses the global pool. Never affects output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        RunConfig {
            trials,
            seed,
            rotation: TermRotation::RoundRobin,
            threads: None,
        }
    }

    pub fn with_rotation(mut self, rotation: TermRotation) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

/// Stream for model randomness at time index `t`.
pub fn trial_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

/// Group kind for each time index.
pub fn assign_groups(groups: usize, config: &RunConfig) -> Vec<usize> {
    (0..config.trials)
        .map(|t| match config.rotation {
            TermRotation::RoundRobin => (t % groups as u64) as usize,
            TermRotation::UniformRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ROTATION_SALT);
                rng.set_stream(t);
                rng.random_range(0..groups)
            }
        })
        .collect()
}

pub fn materialize(protocol: &Protocol, config: &RunConfig) -> Schedule {
    protocol.materialize(&assign_groups(protocol.groups.len(), config))
}

fn with_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, EngineError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the experiment's model for `config.trials` time indices.
pub fn run(experiment: &Experiment, config: &RunConfig) -> Result<TrialLog, EngineError> {
    if config.trials == 0 {
        return Err(EngineError::NoTrials);
    }
    let schedule = materialize(experiment.protocol(), config);
    run_schedule(
        experiment.model(),
        experiment.settings(),
        experiment.expression(),
        schedule,
        config.seed,
        config.threads,
    )
}

/// Runs a model over an already materialized schedule.
pub fn run_schedule(
    model: &Model,
    settings: &BTreeMap<SettingId, Setting>,
    expr: &Expression,
    schedule: Schedule,
    seed: u64,
    threads: Option<usize>,
) -> Result<TrialLog, EngineError> {
    if schedule.trials == 0 {
        return Err(EngineError::NoTrials);
    }
    let violations = validate_schedule(&schedule, expr);
    if !violations.is_empty() {
        return Err(EngineError::InvalidSchedule(join_violations(&violations)));
    }
    let spans = schedule.group_spans();
    let events = &schedule.events;
    let outcomes = with_pool(threads, || {
        spans
            .par_iter()
            .enumerate()
            .map(|(t, span)| {
                let mut rng = trial_rng(seed, t as u64);
                model
                    .respond(&events[span.clone()], settings, &mut rng)
                    .map_err(|source| EngineError::Model {
                        time: t as u64,
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    let observations = events
        .iter()
        .zip(outcomes.into_iter().flatten())
        .map(|(e, value)| Observation {
            setting: e.setting.clone(),
            station: e.station.clone(),
            time: e.time,
            value,
        })
        .collect();
    Ok(TrialLog {
        model_name: model.name().to_string(),
        seed,
        schedule,
        observations,
    })
}

/// One observation per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub trial: u64,
    pub station: String,
    pub setting: String,
    pub time: u64,
    pub value: i64,
}

fn records(log: &TrialLog) -> impl Iterator<Item = ObservationRecord> + '_ {
    log.observations.iter().map(|o| ObservationRecord {
        trial: o.time.0,
        station: o.station.to_string(),
        setting: o.setting.to_string(),
        time: o.time.0,
        value: o.value.get(),
    })
}

/// Line-delimited JSON, one observation per line.
pub fn write_jsonl<W: std::io::Write>(log: &TrialLog, mut out: W) -> std::io::Result<()> {
    for r in records(log) {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// CSV with header `trial,station,setting,time,value`.
pub fn write_csv<W: std::io::Write>(log: &TrialLog, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records(log) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_is_balanced() {
        let cfg = RunConfig::new(999, 1);
        let g = assign_groups(3, &cfg);
        for k in 0..3 {
            assert_eq!(g.iter().filter(|&&x| x == k).count(), 333);
        }
    }

    #[test]
    fn uniform_rotation_depends_only_on_seed_and_time() {
        let a = assign_groups(
            3,
            &RunConfig::new(500, 9).with_rotation(TermRotation::UniformRandom),
        );
        let b = assign_groups(
            3,
            &RunConfig::new(200, 9).with_rotation(TermRotation::UniformRandom),
        );
        assert_eq!(&a[..200], &b[..]);
        assert!((0..3).all(|k| a.contains(&k)));
    }

    #[test]
    fn trial_streams_differ() {
        let x: u64 = trial_rng(5, 0).random();
        let y: u64 = trial_rng(5, 1).random();
        assert_ne!(x, y);
        assert_eq!(x, trial_rng(5, 0).random::<u64>());
    }
}
