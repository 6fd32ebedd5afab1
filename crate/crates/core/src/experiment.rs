//! Experiment definition documents (JSON) and their validation.
//!
//! Field names are documented in `docs/experiment-schema.md`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Expression;
use crate::domain::{
    validate_schedule, Protocol, ScheduleViolation, Setting, SettingId, StationId,
};
use crate::labeling::{Labeler, LabelingScheme};
use crate::models::{Model, ModelError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("duplicate {kind} id {id:?}")]
    Duplicate { kind: &'static str, id: String },
    #[error("expression references unknown {kind} {id:?}")]
    UnknownReference { kind: &'static str, id: String },
    #[error("schedule group {group} is invalid: {violations}")]
    Schedule { group: usize, violations: String },
    #[error("schedule has no groups")]
    EmptySchedule,
    #[error("schedule group {0} measures nothing")]
    EmptyGroup(usize),
    #[error("term {0} is never measured by any schedule group")]
    UnmeasuredTerm(usize),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("group {group} has {got} events but model {model} needs {expected}")]
    Arity {
        group: usize,
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cannot parse experiment definition: {0}")]
    Parse(#[from] serde_json::Error),
}

/// The on-disk experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub settings: Vec<Setting>,
    pub stations: Vec<StationId>,
    pub expression: Expression,
    pub schedule: Protocol,
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeling: Option<LabelingScheme>,
}

/// A definition that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    def: ExperimentDef,
    settings: BTreeMap<SettingId, Setting>,
}

impl Experiment {
    pub fn new(def: ExperimentDef) -> Result<Self, ExperimentError> {
        let mut settings = BTreeMap::new();
        for s in &def.settings {
            if settings.insert(s.id.clone(), s.clone()).is_some() {
                return Err(ExperimentError::Duplicate {
                    kind: "setting",
                    id: s.id.to_string(),
                });
            }
        }
        let mut stations = BTreeSet::new();
        for st in &def.stations {
            if !stations.insert(st.clone()) {
                return Err(ExperimentError::Duplicate {
                    kind: "station",
                    id: st.to_string(),
                });
            }
        }
        for term in &def.expression.terms {
            for slot in &term.slots {
                if !settings.contains_key(&slot.setting) {
                    return Err(ExperimentError::UnknownReference {
                        kind: "setting",
                        id: slot.setting.to_string(),
                    });
                }
                if !stations.contains(&slot.station) {
                    return Err(ExperimentError::UnknownReference {
                        kind: "station",
                        id: slot.station.to_string(),
                    });
                }
            }
        }
        if def.schedule.groups.is_empty() {
            return Err(ExperimentError::EmptySchedule);
        }
        let mut measured = BTreeSet::new();
        for (g, group) in def.schedule.groups.iter().enumerate() {
            if group.events.is_empty() {
                return Err(ExperimentError::EmptyGroup(g));
            }
            let one = Protocol {
                groups: vec![group.clone()],
            }
            .materialize(&[0]);
            let violations = validate_schedule(&one, &def.expression);
            if !violations.is_empty() {
                return Err(ExperimentError::Schedule {
                    group: g,
                    violations: join_violations(&violations),
                });
            }
            if let Some(expected) = def.model.arity() {
                if group.events.len() != expected {
                    return Err(ExperimentError::Arity {
                        group: g,
                        model: def.model.name(),
                        expected,
                        got: group.events.len(),
                    });
                }
            }
            measured.extend(group.terms());
        }
        if let Some(t) = (0..def.expression.term_count()).find(|t| !measured.contains(t)) {
            return Err(ExperimentError::UnmeasuredTerm(t));
        }
        def.model.validate(&def.settings, &def.stations)?;
        Ok(Experiment { def, settings })
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Experiment::new(serde_json::from_str(text)?)
    }

    pub fn def(&self) -> &ExperimentDef {
        &self.def
    }

    pub fn expression(&self) -> &Expression {
        &self.def.expression
    }

    pub fn model(&self) -> &Model {
        &self.def.model
    }

    pub fn protocol(&self) -> &Protocol {
        &self.def.schedule
    }

    pub fn settings(&self) -> &BTreeMap<SettingId, Setting> {
        &self.settings
    }

    pub fn labeler(&self) -> Labeler {
        Labeler::new(
            self.settings.keys().cloned(),
            self.def.stations.iter().cloned(),
        )
    }
}

pub(crate) fn join_violations(v: &[ScheduleViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
