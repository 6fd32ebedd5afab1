//! Shared domain types: settings, stations, time indices, outcomes,
//! schedules and trial logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNIT_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("outcome value must be -1 or +1, got {0}")]
    InvalidOutcome(i64),
    #[error("identifier must be nonempty")]
    EmptyId,
    #[error("identifier {0:?} must not contain '/' or whitespace")]
    BadId(String),
    #[error("direction vector of setting {0:?} has zero or non-finite norm")]
    DegenerateDirection(String),
}

/// A single dichotomic outcome, always -1 or +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct OutcomeValue(i8);

impl OutcomeValue {
    pub const PLUS: OutcomeValue = OutcomeValue(1);
    pub const MINUS: OutcomeValue = OutcomeValue(-1);

    pub fn new(v: i64) -> Result<Self, DomainError> {
        match v {
            1 => Ok(Self::PLUS),
            -1 => Ok(Self::MINUS),
            other => Err(DomainError::InvalidOutcome(other)),
        }
    }

    pub fn from_sign(positive: bool) -> Self {
        if positive {
            Self::PLUS
        } else {
            Self::MINUS
        }
    }

    pub fn get(self) -> i64 {
        self.0 as i64
    }

    pub fn is_plus(self) -> bool {
        self.0 > 0
    }
}

impl std::ops::Neg for OutcomeValue {
    type Output = OutcomeValue;
    fn neg(self) -> Self::Output {
        OutcomeValue(-self.0)
    }
}

impl std::ops::Mul for OutcomeValue {
    type Output = OutcomeValue;
    fn mul(self, rhs: Self) -> Self::Output {
        OutcomeValue(self.0 * rhs.0)
    }
}

impl TryFrom<i64> for OutcomeValue {
    type Error = DomainError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        OutcomeValue::new(v)
    }
}

impl From<OutcomeValue> for i64 {
    fn from(v: OutcomeValue) -> i64 {
        v.get()
    }
}

impl fmt::Display for OutcomeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

fn check_id(s: &str) -> Result<(), DomainError> {
    if s.is_empty() {
        return Err(DomainError::EmptyId);
    }
    if s.contains('/') || s.chars().any(char::is_whitespace) {
        return Err(DomainError::BadId(s.to_string()));
    }
    Ok(())
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self, DomainError> {
                let id = id.into();
                check_id(&id)?;
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = DomainError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                Self::new(s)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = DomainError;
            fn try_from(s: &str) -> Result<Self, Self::Error> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(v: $name) -> String {
                v.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_newtype!(
    /// Symbolic name of a measurement setting ("a", "b", "c").
    SettingId
);
id_newtype!(
    /// Symbolic name of a measurement station ("Lille", "Lyon").
    StationId
);

/// Abstract trial/date label. Parity is the only structure models may use.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TimeIndex(pub u64);

impl TimeIndex {
    pub fn is_even(self) -> bool {
        self.0.is_multiple_of(2)
    }
}

impl fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A measurement setting, optionally carrying a unit direction for quantum models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSetting")]
pub struct Setting {
    pub id: SettingId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 3]>,
}

#[derive(Deserialize)]
struct RawSetting {
    id: SettingId,
    #[serde(default)]
    direction: Option<[f64; 3]>,
}

impl TryFrom<RawSetting> for Setting {
    type Error = DomainError;
    fn try_from(raw: RawSetting) -> Result<Self, Self::Error> {
        match raw.direction {
            Some(d) => Setting::with_direction(raw.id, d),
            None => Ok(Setting::plain(raw.id)),
        }
    }
}

impl Setting {
    pub fn plain(id: SettingId) -> Self {
        Setting {
            id,
            direction: None,
        }
    }

    /// Normalizes `direction` to unit length.
    pub fn with_direction(id: SettingId, direction: [f64; 3]) -> Result<Self, DomainError> {
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(DomainError::DegenerateDirection(id.0));
        }
        let unit = if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            direction
        } else {
            direction.map(|x| x / norm)
        };
        Ok(Setting {
            id,
            direction: Some(unit),
        })
    }

    /// Unit vector in the x-z plane at `degrees` from the z axis.
    pub fn at_angle(id: SettingId, degrees: f64) -> Self {
        let r = degrees.to_radians();
        Setting::with_direction(id, [r.sin(), 0.0, r.cos()]).expect("unit vector")
    }
}

/// One measured outcome with its full provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub setting: SettingId,
    pub station: StationId,
    pub time: TimeIndex,
    pub value: OutcomeValue,
}

/// Position of a factor inside an expression: term index and slot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermSlot {
    pub term: usize,
    pub slot: usize,
}

impl TermSlot {
    pub fn new(term: usize, slot: usize) -> Self {
        TermSlot { term, slot }
    }
}

/// A single measurement planned at a given time. One measurement may feed
/// several product terms (Lille's `a` outcome in both `ab` and `ac`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub station: StationId,
    pub setting: SettingId,
    pub time: TimeIndex,
    pub feeds: Vec<TermSlot>,
}

/// Consecutive time indices `start..end` whose groups measure `terms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: u64,
    pub end: u64,
    pub terms: Vec<usize>,
}

/// A concrete, fully materialized measurement plan for `trials` time indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub trials: u64,
    pub events: Vec<MeasurementEvent>,
    pub grouping: Vec<TimeRange>,
}

impl Schedule {
    /// Index ranges into `events`, one per time index, in time order.
    /// Assumes events are sorted by time.
    pub fn group_spans(&self) -> Vec<std::ops::Range<usize>> {
        let mut spans = Vec::with_capacity(self.trials as usize);
        let mut start = 0;
        for t in 0..self.trials {
            let mut end = start;
            while end < self.events.len() && self.events[end].time.0 == t {
                end += 1;
            }
            spans.push(start..end);
            start = end;
        }
        spans
    }

    /// Term indices measured at time `t`, as recorded in `grouping`.
    pub fn terms_at(&self, t: u64) -> Option<&[usize]> {
        // ranges are sorted and disjoint
        let i = self.grouping.partition_point(|r| r.end <= t);
        self.grouping
            .get(i)
            .filter(|r| r.start <= t)
            .map(|r| r.terms.as_slice())
    }
}

/// A reusable template for one date's measurements: the events that happen
/// together and which term slots each feeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTemplate {
    pub events: Vec<EventTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTemplate {
    pub station: StationId,
    pub setting: SettingId,
    pub feeds: Vec<TermSlot>,
}

impl GroupTemplate {
    /// Sorted, deduplicated term indices this group feeds.
    pub fn terms(&self) -> Vec<usize> {
        self.events
            .iter()
            .flat_map(|e| e.feeds.iter().map(|f| f.term))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// The schedule section of an experiment definition: the kinds of dates
/// that occur. The engine assigns one kind to each time index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub groups: Vec<GroupTemplate>,
}

impl Protocol {
    /// One group per term, each term measured at its own date by the stations
    /// named in its slots.
    pub fn one_term_per_date(expr: &crate::bounds::Expression) -> Self {
        let groups = expr
            .terms
            .iter()
            .enumerate()
            .map(|(ti, term)| GroupTemplate {
                events: term
                    .slots
                    .iter()
                    .enumerate()
                    .map(|(si, slot)| EventTemplate {
                        station: slot.station.clone(),
                        setting: slot.setting.clone(),
                        feeds: vec![TermSlot::new(ti, si)],
                    })
                    .collect(),
            })
            .collect();
        Protocol { groups }
    }

    /// A single group measuring every term at the same date, with one event
    /// per distinct (station, setting) slot.
    pub fn all_terms_per_date(expr: &crate::bounds::Expression) -> Self {
        let mut events: Vec<EventTemplate> = Vec::new();
        for (ti, term) in expr.terms.iter().enumerate() {
            for (si, slot) in term.slots.iter().enumerate() {
                let feed = TermSlot::new(ti, si);
                match events
                    .iter_mut()
                    .find(|e| e.station == slot.station && e.setting == slot.setting)
                {
                    Some(e) => e.feeds.push(feed),
                    None => events.push(EventTemplate {
                        station: slot.station.clone(),
                        setting: slot.setting.clone(),
                        feeds: vec![feed],
                    }),
                }
            }
        }
        Protocol {
            groups: vec![GroupTemplate { events }],
        }
    }

    /// Concrete schedule from a per-time group assignment.
    pub fn materialize(&self, assignment: &[usize]) -> Schedule {
        let mut events = Vec::new();
        let mut grouping: Vec<TimeRange> = Vec::new();
        for (t, &g) in assignment.iter().enumerate() {
            let t = t as u64;
            let group = &self.groups[g];
            for e in &group.events {
                events.push(MeasurementEvent {
                    station: e.station.clone(),
                    setting: e.setting.clone(),
                    time: TimeIndex(t),
                    feeds: e.feeds.clone(),
                });
            }
            let terms = group.terms();
            match grouping.last_mut() {
                Some(last) if last.end == t && last.terms == terms => last.end = t + 1,
                _ => grouping.push(TimeRange {
                    start: t,
                    end: t + 1,
                    terms,
                }),
            }
        }
        Schedule {
            trials: assignment.len() as u64,
            events,
            grouping,
        }
    }
}

/// One violation of the schedule invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleViolation {
    StationRepeatedAtTime {
        station: StationId,
        time: u64,
    },
    TermNotCoDated {
        term: usize,
        times: Vec<u64>,
    },
    SlotFilledTwice {
        term: usize,
        slot: usize,
        time: u64,
    },
    SlotMissing {
        term: usize,
        slot: usize,
        time: u64,
    },
    UnknownTermSlot {
        event: usize,
        term: usize,
        slot: usize,
    },
    SlotMismatch {
        event: usize,
        term: usize,
        slot: usize,
    },
    TimeOutOfRange {
        event: usize,
        time: u64,
    },
    EventsOutOfOrder {
        event: usize,
    },
    EmptyFeeds {
        event: usize,
    },
    GroupingMismatch {
        time: u64,
    },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScheduleViolation::*;
        match self {
            StationRepeatedAtTime { station, time } => {
                write!(f, "station repeated at time: {station} at t={time}")
            }
            TermNotCoDated { term, times } => {
                write!(f, "term not co-dated: term {term} spans times {times:?}")
            }
            SlotFilledTwice { term, slot, time } => {
                write!(f, "slot filled twice: term {term} slot {slot} at t={time}")
            }
            SlotMissing { term, slot, time } => {
                write!(f, "slot missing: term {term} slot {slot} at t={time}")
            }
            UnknownTermSlot { event, term, slot } => {
                write!(f, "unknown term slot: event {event} feeds ({term}, {slot})")
            }
            SlotMismatch { event, term, slot } => write!(
                f,
                "slot mismatch: event {event} does not match setting/station of ({term}, {slot})"
            ),
            TimeOutOfRange { event, time } => {
                write!(f, "time out of range: event {event} at t={time}")
            }
            EventsOutOfOrder { event } => write!(f, "events out of order at event {event}"),
            EmptyFeeds { event } => write!(f, "event {event} feeds no term slot"),
            GroupingMismatch { time } => write!(f, "grouping disagrees with events at t={time}"),
        }
    }
}

/// Checks a concrete schedule against the expression it should fill.
/// Returns every violation found; an empty list means the schedule is valid.
pub fn validate_schedule(
    schedule: &Schedule,
    expr: &crate::bounds::Expression,
) -> Vec<ScheduleViolation> {
    use ScheduleViolation::*;
    let mut out = Vec::new();
    let mut last_time = 0u64;
    // Sorted vectors rather than maps: schedules run to millions of events.
    let mut fills: Vec<(u64, usize, usize)> = Vec::with_capacity(schedule.events.len());
    let mut station_times: Vec<(u64, &StationId)> = Vec::with_capacity(schedule.events.len());

    for (i, ev) in schedule.events.iter().enumerate() {
        let t = ev.time.0;
        if t >= schedule.trials {
            out.push(TimeOutOfRange { event: i, time: t });
        }
        if t < last_time {
            out.push(EventsOutOfOrder { event: i });
        }
        last_time = last_time.max(t);
        if ev.feeds.is_empty() {
            out.push(EmptyFeeds { event: i });
        }
        station_times.push((t, &ev.station));
        for feed in &ev.feeds {
            let Some(slot) = expr
                .terms
                .get(feed.term)
                .and_then(|term| term.slots.get(feed.slot))
            else {
                out.push(UnknownTermSlot {
                    event: i,
                    term: feed.term,
                    slot: feed.slot,
                });
                continue;
            };
            if slot.setting != ev.setting || slot.station != ev.station {
                out.push(SlotMismatch {
                    event: i,
                    term: feed.term,
                    slot: feed.slot,
                });
            }
            fills.push((t, feed.term, feed.slot));
        }
    }
    station_times.sort_unstable();
    for w in station_times.windows(2) {
        if w[0] == w[1] {
            out.push(StationRepeatedAtTime {
                station: w[0].1.clone(),
                time: w[0].0,
            });
        }
    }
    fills.sort_unstable();
    let mut measured: Vec<(u64, usize)> = fills.iter().map(|&(t, k, _)| (t, k)).collect();
    measured.dedup();
    let fill_count = |t: u64, term: usize, slot: usize| -> usize {
        let key = (t, term, slot);
        fills.partition_point(|x| *x <= key) - fills.partition_point(|x| *x < key)
    };

    // Each measured term must have every slot filled exactly once per date.
    // A term whose slots are spread over several dates is not co-dated.
    let mut partial: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for &(t, term) in &measured {
        for slot in 0..expr.terms[term].slots.len() {
            match fill_count(t, term, slot) {
                0 => {
                    out.push(SlotMissing {
                        term,
                        slot,
                        time: t,
                    });
                    partial.entry(term).or_default().push(t);
                }
                1 => {}
                _ => out.push(SlotFilledTwice {
                    term,
                    slot,
                    time: t,
                }),
            }
        }
    }

    let terms_at = |t: u64| -> Vec<usize> {
        let lo = measured.partition_point(|&(x, _)| x < t);
        let hi = measured.partition_point(|&(x, _)| x <= t);
        measured[lo..hi].iter().map(|&(_, k)| k).collect()
    };
    for range in &schedule.grouping {
        let mut recorded = range.terms.clone();
        recorded.sort_unstable();
        recorded.dedup();
        for t in range.start..range.end.min(schedule.trials) {
            if recorded != terms_at(t) {
                out.push(GroupingMismatch { time: t });
            }
        }
    }
    // Ranges must tile [0, trials); report the start of each uncovered stretch.
    let mut ranges: Vec<(u64, u64)> = schedule.grouping.iter().map(|r| (r.start, r.end)).collect();
    ranges.sort_unstable();
    let mut next = 0u64;
    for (start, end) in ranges {
        if start > next && next < schedule.trials {
            out.push(GroupingMismatch { time: next });
        }
        next = next.max(end);
    }
    if next < schedule.trials {
        out.push(GroupingMismatch { time: next });
    }
    for (term, mut times) in partial {
        times.dedup();
        if times.len() > 1 {
            out.push(TermNotCoDated { term, times });
        }
    }
    out
}

/// Output of one engine run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialLog {
    pub model_name: String,
    pub seed: u64,
    pub schedule: Schedule,
    /// `observations[i]` is the outcome of `schedule.events[i]`.
    pub observations: Vec<Observation>,
}

impl TrialLog {
    /// Checks that every observation matches its scheduled event.
    pub fn is_consistent(&self) -> bool {
        self.observations.len() == self.schedule.events.len()
            && self
                .observations
                .iter()
                .zip(&self.schedule.events)
                .all(|(o, e)| o.setting == e.setting && o.station == e.station && o.time == e.time)
    }
}
