//! Outcome-generating models.
//!
//! Every model answers one co-dated group of measurement events at a time.
//! Randomness comes from the caller-supplied stream, which the engine keys by
//! `(seed, time index)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MeasurementEvent, OutcomeValue, Setting, SettingId, StationId};

const PROBABILITY_TOLERANCE: f64 = 1e-12;
const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{model} expects groups of {expected} events, got {got}")]
    Arity {
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("setting {0:?} has no direction vector")]
    MissingDirection(String),
    #[error("vector is not unit length (norm {0})")]
    NonUnit(f64),
    #[error("{model} has no response for setting {setting:?}")]
    UnknownSetting {
        model: &'static str,
        setting: String,
    },
    #[error("{model} has no response for {setting:?} at station {station:?} with parameter {parameter:?}")]
    MissingResponse {
        model: &'static str,
        setting: String,
        station: String,
        parameter: String,
    },
    #[error("probabilities must be nonnegative and sum to 1 (sum {0})")]
    BadDistribution(f64),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Deterministic two-city model: fixed signs on even dates, all reversed on
/// odd dates, and `flip_setting` inverted at `flip_station`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvenOddCityModel {
    pub flip_station: StationId,
    pub flip_setting: SettingId,
    pub even_values: BTreeMap<SettingId, OutcomeValue>,
}

impl EvenOddCityModel {
    /// a = +1 and c = -1 everywhere, b = +1 in Lille and -1 in Lyon, on even dates.
    pub fn two_cities() -> Self {
        let sid = |s: &str| SettingId::new(s).expect("id");
        EvenOddCityModel {
            flip_station: StationId::new("Lyon").expect("id"),
            flip_setting: sid("b"),
            even_values: [
                (sid("a"), OutcomeValue::PLUS),
                (sid("b"), OutcomeValue::PLUS),
                (sid("c"), OutcomeValue::MINUS),
            ]
            .into_iter()
            .collect(),
        }
    }

    pub fn value(&self, ev: &MeasurementEvent) -> Result<OutcomeValue, ModelError> {
        let mut v =
            *self
                .even_values
                .get(&ev.setting)
                .ok_or_else(|| ModelError::UnknownSetting {
                    model: "even-odd-city",
                    setting: ev.setting.to_string(),
                })?;
        if ev.station == self.flip_station && ev.setting == self.flip_setting {
            v = -v;
        }
        if !ev.time.is_even() {
            v = -v;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub lambda: String,
    pub probability: f64,
    pub responses: BTreeMap<SettingId, OutcomeValue>,
}

/// Source-borne hidden variable drawn once per co-dated group and shared by
/// every station; outcomes depend only on (setting, λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidHiddenVariableModel {
    pub states: Vec<HiddenState>,
}

impl IidHiddenVariableModel {
    /// Uniform over all 2^k sign patterns of `settings`: every outcome is an
    /// independent fair coin.
    pub fn symmetric(settings: &[SettingId]) -> Self {
        let k = settings.len();
        let p = 1.0 / (1u64 << k) as f64;
        let states = (0..1u64 << k)
            .map(|bits| HiddenState {
                lambda: format!("l{bits}"),
                probability: p,
                responses: settings
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.clone(), OutcomeValue::from_sign(bits >> i & 1 == 0)))
                    .collect(),
            })
            .collect();
        IidHiddenVariableModel { states }
    }

    pub fn constant(settings: &[SettingId], value: OutcomeValue) -> Self {
        IidHiddenVariableModel {
            states: vec![HiddenState {
                lambda: "l0".into(),
                probability: 1.0,
                responses: settings.iter().map(|s| (s.clone(), value)).collect(),
            }],
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &HiddenState {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for s in &self.states {
            acc += s.probability;
            if u < acc {
                return s;
            }
        }
        self.states
            .iter()
            .rev()
            .find(|s| s.probability > 0.0)
            .unwrap_or(&self.states[0])
    }
}

/// Device parameters λ_s(t) that depend on the setting and, periodically, on
/// the measurement time; outcomes depend on (setting, station, λ_s(t)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquipmentTimeParamModel {
    pub period: u64,
    /// `parameters[s][t % period]` names the parameter of setting `s` at time `t`.
    pub parameters: BTreeMap<SettingId, Vec<String>>,
    pub responses: BTreeMap<SettingId, BTreeMap<StationId, BTreeMap<String, OutcomeValue>>>,
}

impl EquipmentTimeParamModel {
    /// Period-2 parameters that reproduce the two-city even/odd table.
    pub fn two_cities() -> Self {
        let eo = EvenOddCityModel::two_cities();
        let stations = [
            StationId::new("Lille").expect("id"),
            StationId::new("Lyon").expect("id"),
        ];
        let mut parameters = BTreeMap::new();
        let mut responses = BTreeMap::new();
        for (s, &even) in &eo.even_values {
            parameters.insert(s.clone(), vec![format!("{s}0"), format!("{s}1")]);
            let mut per_station = BTreeMap::new();
            for st in &stations {
                let base = if *st == eo.flip_station && *s == eo.flip_setting {
                    -even
                } else {
                    even
                };
                per_station.insert(
                    st.clone(),
                    [(format!("{s}0"), base), (format!("{s}1"), -base)]
                        .into_iter()
                        .collect(),
                );
            }
            responses.insert(s.clone(), per_station);
        }
        EquipmentTimeParamModel {
            period: 2,
            parameters,
            responses,
        }
    }

    pub fn value(&self, ev: &MeasurementEvent) -> Result<OutcomeValue, ModelError> {
        let unknown = || ModelError::UnknownSetting {
            model: "equipment-time-param",
            setting: ev.setting.to_string(),
        };
        let params = self.parameters.get(&ev.setting).ok_or_else(unknown)?;
        let param = &params[(ev.time.0 % self.period) as usize];
        self.responses
            .get(&ev.setting)
            .and_then(|m| m.get(&ev.station))
            .and_then(|m| m.get(param))
            .copied()
            .ok_or_else(|| ModelError::MissingResponse {
                model: "equipment-time-param",
                setting: ev.setting.to_string(),
                station: ev.station.to_string(),
                parameter: param.clone(),
            })
    }
}

/// Pair sampler for the two-particle singlet state. Directions come from the
/// settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantumSingletModel {}

/// Joint distribution over the 8 outcomes of three settings measured
/// together. Outcome index bit i set means `settings[i]` reads -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTripleModel {
    pub settings: [SettingId; 3],
    pub probabilities: [f64; 8],
}

impl JointTripleModel {
    pub fn uniform(settings: [SettingId; 3]) -> Self {
        JointTripleModel {
            settings,
            probabilities: [0.125; 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    EvenOddCity(EvenOddCityModel),
    IidHiddenVariable(IidHiddenVariableModel),
    EquipmentTimeParam(EquipmentTimeParamModel),
    QuantumSinglet(QuantumSingletModel),
    JointTriple(JointTripleModel),
}

fn check_distribution(probs: impl IntoIterator<Item = f64>) -> Result<(), ModelError> {
    let mut sum = 0.0;
    for p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(ModelError::BadDistribution(p));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(ModelError::BadDistribution(sum));
    }
    Ok(())
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Singlet correlation `E(a, b) = -a·b` for unit vectors.
pub fn singlet_correlation(a: &[f64; 3], b: &[f64; 3]) -> Result<f64, ModelError> {
    for v in [a, b] {
        let n = dot(v, v).sqrt();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(ModelError::NonUnit(n));
        }
    }
    Ok((-dot(a, b)).clamp(-1.0, 1.0))
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::EvenOddCity(_) => "even-odd-city",
            Model::IidHiddenVariable(_) => "iid-hidden-variable",
            Model::EquipmentTimeParam(_) => "equipment-time-param",
            Model::QuantumSinglet(_) => "quantum-singlet",
            Model::JointTriple(_) => "joint-triple",
        }
    }

    /// Events per co-dated group the model requires, if fixed.
    pub fn arity(&self) -> Option<usize> {
        match self {
            Model::QuantumSinglet(_) => Some(2),
            Model::JointTriple(_) => Some(3),
            _ => None,
        }
    }

    /// Structural checks against the experiment's settings and stations.
    pub fn validate(&self, settings: &[Setting], stations: &[StationId]) -> Result<(), ModelError> {
        let known: BTreeSet<&SettingId> = settings.iter().map(|s| &s.id).collect();
        match self {
            Model::EvenOddCity(m) => {
                for s in &known {
                    if !m.even_values.contains_key(*s) {
                        return Err(ModelError::UnknownSetting {
                            model: self.name(),
                            setting: s.to_string(),
                        });
                    }
                }
            }
            Model::IidHiddenVariable(m) => {
                if m.states.is_empty() {
                    return Err(ModelError::Invalid("no hidden states".into()));
                }
                check_distribution(m.states.iter().map(|s| s.probability))?;
                for st in &m.states {
                    for s in &known {
                        if !st.responses.contains_key(*s) {
                            return Err(ModelError::UnknownSetting {
                                model: self.name(),
                                setting: s.to_string(),
                            });
                        }
                    }
                }
            }
            Model::EquipmentTimeParam(m) => {
                if m.period == 0 {
                    return Err(ModelError::Invalid("period must be at least 1".into()));
                }
                for s in &known {
                    let params =
                        m.parameters
                            .get(*s)
                            .ok_or_else(|| ModelError::UnknownSetting {
                                model: self.name(),
                                setting: s.to_string(),
                            })?;
                    if params.len() as u64 != m.period {
                        return Err(ModelError::Invalid(format!(
                            "setting {s} has {} parameters for period {}",
                            params.len(),
                            m.period
                        )));
                    }
                    for st in stations {
                        for p in params {
                            let ok = m
                                .responses
                                .get(*s)
                                .and_then(|x| x.get(st))
                                .is_some_and(|x| x.contains_key(p));
                            if !ok {
                                return Err(ModelError::MissingResponse {
                                    model: self.name(),
                                    setting: s.to_string(),
                                    station: st.to_string(),
                                    parameter: p.clone(),
                                });
                            }
                        }
                    }
                }
            }
            Model::QuantumSinglet(_) => {
                for s in settings {
                    if s.direction.is_none() {
                        return Err(ModelError::MissingDirection(s.id.to_string()));
                    }
                }
            }
            Model::JointTriple(m) => {
                check_distribution(m.probabilities)?;
                let distinct: BTreeSet<_> = m.settings.iter().collect();
                if distinct.len() != 3 {
                    return Err(ModelError::Invalid(
                        "joint triple needs three distinct settings".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Outcomes for one co-dated group of events, in event order.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        group: &[MeasurementEvent],
        settings: &BTreeMap<SettingId, Setting>,
        rng: &mut R,
    ) -> Result<Vec<OutcomeValue>, ModelError> {
        if let Some(expected) = self.arity() {
            if group.len() != expected {
                return Err(ModelError::Arity {
                    model: self.name(),
                    expected,
                    got: group.len(),
                });
            }
        }
        match self {
            Model::EvenOddCity(m) => group.iter().map(|e| m.value(e)).collect(),
            Model::EquipmentTimeParam(m) => group.iter().map(|e| m.value(e)).collect(),
            Model::IidHiddenVariable(m) => {
                let state = m.draw(rng);
                group
                    .iter()
                    .map(|e| {
                        state.responses.get(&e.setting).copied().ok_or_else(|| {
                            ModelError::UnknownSetting {
                                model: self.name(),
                                setting: e.setting.to_string(),
                            }
                        })
                    })
                    .collect()
            }
            Model::QuantumSinglet(_) => {
                let dir = |e: &MeasurementEvent| {
                    settings
                        .get(&e.setting)
                        .and_then(|s| s.direction)
                        .ok_or_else(|| ModelError::MissingDirection(e.setting.to_string()))
                };
                let (a, b) = (dir(&group[0])?, dir(&group[1])?);
                let corr = singlet_correlation(&a, &b)?;
                // P(A, B) = (1 - A B (a·b)) / 4: A is a fair coin and
                // P(B = -A) = (1 + a·b) / 2.
                let first = OutcomeValue::from_sign(rng.random_bool(0.5));
                let p_opposite = ((1.0 - corr) / 2.0).clamp(0.0, 1.0);
                let second = if rng.random_bool(p_opposite) {
                    -first
                } else {
                    first
                };
                Ok(vec![first, second])
            }
            Model::JointTriple(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                // rounding can leave u just above the running sum
                let mut outcome = m.probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(7);
                for (k, p) in m.probabilities.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        outcome = k;
                        break;
                    }
                }
                group
                    .iter()
                    .map(|e| {
                        let i =
                            m.settings
                                .iter()
                                .position(|s| *s == e.setting)
                                .ok_or_else(|| ModelError::UnknownSetting {
                                    model: self.name(),
                                    setting: e.setting.to_string(),
                                })?;
                        Ok(OutcomeValue::from_sign(outcome >> i & 1 == 0))
                    })
                    .collect()
            }
        }
    }
}
