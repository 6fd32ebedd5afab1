//! Tight algebraic bounds of ±1 product sums and cycle detection over the
//! shared-variable structure of an expression.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, OutcomeValue, SettingId, StationId, TimeIndex};
use crate::labeling::{LabelingScheme, LogicalVariableId, VariableTable};

/// Largest variable count `enumerate_bounds` accepts by default (2^24 assignments).
pub const DEFAULT_VARIABLE_CAP: usize = 24;
const HARD_VARIABLE_CAP: usize = 40;
const CHUNK_BITS: u32 = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("expression has {variables} distinct variables, above the cap of {cap}")]
    Capacity { variables: usize, cap: usize },
    #[error("assignment has no value for variable {0}")]
    MissingVariable(LogicalVariableId),
    #[error("invalid expression: {0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// One factor of a product term: which setting, measured at which station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub setting: SettingId,
    pub station: StationId,
}

fn one() -> i32 {
    1
}

fn is_one(c: &i32) -> bool {
    *c == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub slots: Vec<Slot>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub coefficient: i32,
    /// Date label shared by the term's factors. Terms with equal dates are
    /// measured together; `None` means "its own date" (the term index).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<u64>,
}

impl Term {
    pub fn new(slots: Vec<Slot>) -> Self {
        Term {
            slots,
            coefficient: 1,
            date: None,
        }
    }

    pub fn date(&self, index: usize) -> TimeIndex {
        TimeIndex(self.date.unwrap_or(index as u64))
    }
}

/// A sum of product terms over ±1 variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawExpression")]
pub struct Expression {
    pub terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawExpression {
    terms: Vec<Term>,
}

impl TryFrom<RawExpression> for Expression {
    type Error = BoundsError;
    fn try_from(raw: RawExpression) -> Result<Self, Self::Error> {
        Expression::new(raw.terms)
    }
}

impl Expression {
    pub fn new(terms: Vec<Term>) -> Result<Self, BoundsError> {
        if terms.is_empty() {
            return Err(BoundsError::Invalid(
                "expression needs at least one term".into(),
            ));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.slots.is_empty() {
                return Err(BoundsError::Invalid(format!("term {i} has no factors")));
            }
            if t.coefficient != 1 {
                return Err(BoundsError::Invalid(format!(
                    "term {i} has coefficient {}; only +1 is supported",
                    t.coefficient
                )));
            }
        }
        Ok(Expression { terms })
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_pairwise(&self) -> bool {
        self.terms.iter().all(|t| t.slots.len() == 2)
    }

    /// `A_a A_b + A_a A_c + A_b A_c` with one station per setting and every
    /// term measured on the same date.
    pub fn leggett_garg_three_station() -> Self {
        "a@Lille*b@Lyon:0 + a@Lille*c@Paris:0 + b@Lyon*c@Paris:0"
            .parse()
            .expect("valid preset")
    }

    /// Two stations, each term on its own date: Lille measures a or b, Lyon b or c.
    pub fn leggett_garg_two_station() -> Self {
        "a@Lille*b@Lyon + a@Lille*c@Lyon + b@Lille*c@Lyon"
            .parse()
            .expect("valid preset")
    }

    /// Each term measured by its own pair of stations.
    pub fn leggett_garg_station_pairs() -> Self {
        "a@nL*b@nR + a@mL*c@mR + b@lL*c@lR"
            .parse()
            .expect("valid preset")
    }

    /// Resolves a named preset or parses the text syntax.
    pub fn preset_or_parse(s: &str) -> Result<Self, BoundsError> {
        match s {
            "lg" | "lg-three-station" => Ok(Self::leggett_garg_three_station()),
            "lg-two-station" => Ok(Self::leggett_garg_two_station()),
            "lg-pairs" => Ok(Self::leggett_garg_station_pairs()),
            other => other.parse(),
        }
    }

    pub const PRESETS: [&'static str; 3] = ["lg", "lg-two-station", "lg-pairs"];
}

/// Station used when a factor omits `@station`.
pub const DEFAULT_STATION: &str = "any";

impl FromStr for Expression {
    type Err = BoundsError;

    /// Syntax: terms joined by `+`, factors by `*`; a factor is
    /// `setting[@station]`, and a term may end in `:date`.
    /// Example: `a@Lille*b@Lyon + a@Lille*c@Lyon:4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut terms = Vec::new();
        for raw_term in s.split('+') {
            let raw_term = raw_term.trim();
            let (body, date) = match raw_term.rsplit_once(':') {
                Some((b, d)) => {
                    let d = d.trim().parse::<u64>().map_err(|_| {
                        BoundsError::Invalid(format!("bad date in term {raw_term:?}"))
                    })?;
                    (b, Some(d))
                }
                None => (raw_term, None),
            };
            let mut slots = Vec::new();
            for factor in body.split('*') {
                let factor = factor.trim();
                if factor.is_empty() {
                    return Err(BoundsError::Invalid(format!("empty factor in {s:?}")));
                }
                let (setting, station) =
                    factor.split_once('@').unwrap_or((factor, DEFAULT_STATION));
                slots.push(Slot {
                    setting: SettingId::new(setting.trim())?,
                    station: StationId::new(station.trim())?,
                });
            }
            terms.push(Term {
                slots,
                coefficient: 1,
                date,
            });
        }
        Expression::new(terms)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            for (j, s) in t.slots.iter().enumerate() {
                if j > 0 {
                    f.write_str("*")?;
                }
                write!(f, "{}@{}", s.setting, s.station)?;
            }
            if let Some(d) = t.date {
                write!(f, ":{d}")?;
            }
        }
        Ok(())
    }
}

pub type Assignment = BTreeMap<LogicalVariableId, OutcomeValue>;

/// Sum over terms of the product of the assigned values.
pub fn evaluate(
    expr: &Expression,
    scheme: LabelingScheme,
    assignment: &Assignment,
) -> Result<i64, BoundsError> {
    let table = VariableTable::build(expr, scheme);
    let values = table
        .vars
        .iter()
        .map(|id| {
            assignment
                .get(id)
                .copied()
                .ok_or_else(|| BoundsError::MissingVariable(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(table
        .slots
        .iter()
        .map(|term| term.iter().map(|&v| values[v].get()).product::<i64>())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub scheme: LabelingScheme,
    pub min: i64,
    pub max: i64,
    pub trivial_min: i64,
    pub trivial_max: i64,
    pub nontrivial: bool,
    pub variable_count: usize,
    /// Lowest-index assignment attaining `min` (bit i set means variable i is -1).
    pub witness_min: Assignment,
}

/// Per-term XOR masks over variable bits; a bit set in an assignment means -1.
pub(crate) fn term_masks(table: &VariableTable) -> Vec<u64> {
    table
        .slots
        .iter()
        .map(|term| term.iter().fold(0u64, |m, &v| m ^ (1u64 << v)))
        .collect()
}

#[inline]
pub(crate) fn value_at(masks: &[u64], x: u64) -> i64 {
    let odd = masks
        .iter()
        .filter(|&&m| (x & m).count_ones() & 1 == 1)
        .count() as i64;
    masks.len() as i64 - 2 * odd
}

pub(crate) fn assignment_from_index(table: &VariableTable, x: u64) -> Assignment {
    table
        .vars
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), OutcomeValue::from_sign(x >> i & 1 == 0)))
        .collect()
}

#[derive(Clone, Copy)]
struct Extremes {
    min: i64,
    min_at: u64,
    max: i64,
}

impl Extremes {
    fn merge(self, other: Extremes) -> Extremes {
        let (min, min_at) =
            if other.min < self.min || (other.min == self.min && other.min_at < self.min_at) {
                (other.min, other.min_at)
            } else {
                (self.min, self.min_at)
            };
        Extremes {
            min,
            min_at,
            max: self.max.max(other.max),
        }
    }
}

/// Exact min/max of the expression over all 2^v assignments of its logical
/// variables under `scheme`, with the default variable cap.
pub fn enumerate_bounds(
    expr: &Expression,
    scheme: LabelingScheme,
) -> Result<BoundResult, BoundsError> {
    enumerate_bounds_capped(expr, scheme, DEFAULT_VARIABLE_CAP)
}

pub fn enumerate_bounds_capped(
    expr: &Expression,
    scheme: LabelingScheme,
    cap: usize,
) -> Result<BoundResult, BoundsError> {
    let table = VariableTable::build(expr, scheme);
    let v = table.len();
    let cap = cap.min(HARD_VARIABLE_CAP);
    if v > cap {
        return Err(BoundsError::Capacity { variables: v, cap });
    }
    let masks = term_masks(&table);
    let total: u64 = 1 << v;
    let chunk = 1u64 << CHUNK_BITS;
    let chunks = total.div_ceil(chunk);
    let ext = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(total);
            let mut e = Extremes {
                min: i64::MAX,
                min_at: u64::MAX,
                max: i64::MIN,
            };
            for x in lo..hi {
                let val = value_at(&masks, x);
                if val < e.min {
                    e.min = val;
                    e.min_at = x;
                }
                e.max = e.max.max(val);
            }
            e
        })
        .reduce(
            || Extremes {
                min: i64::MAX,
                min_at: u64::MAX,
                max: i64::MIN,
            },
            Extremes::merge,
        );
    let t = expr.term_count() as i64;
    Ok(BoundResult {
        scheme,
        min: ext.min,
        max: ext.max,
        trivial_min: -t,
        trivial_max: t,
        nontrivial: ext.min > -t || ext.max < t,
        variable_count: v,
        witness_min: assignment_from_index(&table, ext.min_at),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicityReport {
    pub scheme: LabelingScheme,
    pub has_cycle: bool,
    /// Term indices around the cycle; consecutive terms (and last with first)
    /// share a logical variable.
    pub cycle_witness: Vec<usize>,
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Finds a cycle in the variable/term incidence multigraph. For pairwise
/// terms this is the same as a cycle in the graph with variables as nodes and
/// terms as edges, 2-cycles from repeated edges included. Wider terms are
/// handled through the same incidence graph.
pub fn detect_cyclicity(expr: &Expression, scheme: LabelingScheme) -> CyclicityReport {
    let table = VariableTable::build(expr, scheme);
    let v = table.len();
    let n = v + table.slots.len();
    let mut sets = DisjointSets::new(n);
    let mut forest: Vec<Vec<usize>> = vec![Vec::new(); n];

    for (ti, term) in table.slots.iter().enumerate() {
        let term_node = v + ti;
        for &var in term {
            if sets.union(term_node, var) {
                forest[term_node].push(var);
                forest[var].push(term_node);
                continue;
            }
            // Closing edge: the forest path var -> term_node plus this edge.
            let path = forest_path(&forest, var, term_node);
            let mut terms: Vec<usize> = path.iter().filter(|&&x| x >= v).map(|&x| x - v).collect();
            normalize_cycle(&mut terms);
            return CyclicityReport {
                scheme,
                has_cycle: true,
                cycle_witness: terms,
            };
        }
    }
    CyclicityReport {
        scheme,
        has_cycle: false,
        cycle_witness: Vec::new(),
    }
}

fn forest_path(forest: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut prev = vec![usize::MAX; forest.len()];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(x) = queue.pop_front() {
        if x == to {
            break;
        }
        for &y in &forest[x] {
            if prev[y] == usize::MAX {
                prev[y] = x;
                queue.push_back(y);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    path
}

/// Rotates so the smallest term comes first, then picks the direction whose
/// second element is smaller.
fn normalize_cycle(terms: &mut [usize]) {
    if terms.len() < 2 {
        return;
    }
    let pos = terms
        .iter()
        .enumerate()
        .min_by_key(|(_, &t)| t)
        .map(|(i, _)| i)
        .unwrap_or(0);
    terms.rotate_left(pos);
    if terms.len() > 2 && terms[terms.len() - 1] < terms[1] {
        terms[1..].reverse();
    }
}
