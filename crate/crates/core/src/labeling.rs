//! Labeling schemes: the rule deciding when two measured outcomes count as
//! the same logical variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Expression;
use crate::domain::{SettingId, StationId, TimeIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("unknown setting id {0:?}")]
    UnknownSetting(String),
    #[error("unknown station id {0:?}")]
    UnknownStation(String),
    #[error("unknown labeling scheme {0:?} (expected one of: setting-only, setting-station, setting-station-parity, setting-station-time, fully-distinct)")]
    UnknownScheme(String),
}

/// Listed from coarsest to finest; each scheme refines the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelingScheme {
    SettingOnly,
    SettingStation,
    SettingStationParity,
    SettingStationTime,
    FullyDistinct,
}

impl LabelingScheme {
    pub const ALL: [LabelingScheme; 5] = [
        LabelingScheme::SettingOnly,
        LabelingScheme::SettingStation,
        LabelingScheme::SettingStationParity,
        LabelingScheme::SettingStationTime,
        LabelingScheme::FullyDistinct,
    ];

    pub const NAMES: [&'static str; 5] = [
        "setting-only",
        "setting-station",
        "setting-station-parity",
        "setting-station-time",
        "fully-distinct",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    /// True when `self` never merges two descriptors that `other` separates.
    pub fn refines(self, other: LabelingScheme) -> bool {
        self >= other
    }
}

impl fmt::Display for LabelingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelingScheme {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| LabelError::UnknownScheme(s.to_string()))
    }
}

/// Canonical key of a logical variable, fields joined by `/`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogicalVariableId(String);

impl LogicalVariableId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LogicalVariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Maps an outcome descriptor to its logical variable under `scheme`.
///
/// Key layouts:
/// `a`, `a/Lille`, `a/Lille/even`, `a/Lille/t5`, `a/Lille/t5/#3`.
pub fn label(
    setting: &SettingId,
    station: &StationId,
    time: TimeIndex,
    slot_serial: usize,
    scheme: LabelingScheme,
) -> LogicalVariableId {
    use LabelingScheme::*;
    let key = match scheme {
        SettingOnly => setting.to_string(),
        SettingStation => format!("{setting}/{station}"),
        SettingStationParity => {
            let parity = if time.is_even() { "even" } else { "odd" };
            format!("{setting}/{station}/{parity}")
        }
        SettingStationTime => format!("{setting}/{station}/t{time}"),
        FullyDistinct => format!("{setting}/{station}/t{time}/#{slot_serial}"),
    };
    LogicalVariableId(key)
}

/// Labels descriptors only after checking them against a known experiment.
#[derive(Debug, Clone, Default)]
pub struct Labeler {
    settings: BTreeSet<SettingId>,
    stations: BTreeSet<StationId>,
}

impl Labeler {
    pub fn new(
        settings: impl IntoIterator<Item = SettingId>,
        stations: impl IntoIterator<Item = StationId>,
    ) -> Self {
        Labeler {
            settings: settings.into_iter().collect(),
            stations: stations.into_iter().collect(),
        }
    }

    pub fn label(
        &self,
        setting: &SettingId,
        station: &StationId,
        time: TimeIndex,
        slot_serial: usize,
        scheme: LabelingScheme,
    ) -> Result<LogicalVariableId, LabelError> {
        if !self.settings.contains(setting) {
            return Err(LabelError::UnknownSetting(setting.to_string()));
        }
        if !self.stations.contains(station) {
            return Err(LabelError::UnknownStation(station.to_string()));
        }
        Ok(label(setting, station, time, slot_serial, scheme))
    }
}

/// Logical variables of an expression under a scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableTable {
    /// Distinct variables, sorted by key. Position is the variable's bit index.
    pub vars: Vec<LogicalVariableId>,
    /// `slots[term][slot]` is the index into `vars`.
    pub slots: Vec<Vec<usize>>,
}

impl VariableTable {
    pub fn build(expr: &Expression, scheme: LabelingScheme) -> Self {
        let mut ids: Vec<Vec<LogicalVariableId>> = Vec::with_capacity(expr.terms.len());
        let mut serial = 0usize;
        for (ti, term) in expr.terms.iter().enumerate() {
            let time = term.date(ti);
            let row = term
                .slots
                .iter()
                .map(|s| {
                    let id = label(&s.setting, &s.station, time, serial, scheme);
                    serial += 1;
                    id
                })
                .collect();
            ids.push(row);
        }
        let index: BTreeMap<LogicalVariableId, usize> = ids
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();
        let slots = ids
            .iter()
            .map(|row| row.iter().map(|id| index[id]).collect())
            .collect();
        let mut vars = vec![None; index.len()];
        for (id, i) in index {
            vars[i] = Some(id);
        }
        VariableTable {
            vars: vars.into_iter().map(Option::unwrap).collect(),
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// Number of distinct logical variables across all term slots.
pub fn distinct_variable_count(expr: &Expression, scheme: LabelingScheme) -> usize {
    VariableTable::build(expr, scheme).len()
}
