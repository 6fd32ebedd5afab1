//! The marginal problem: does one joint distribution over all logical
//! variables reproduce the target expectation of every product term?
//!
//! Each assignment of the `v` logical variables contributes a column of term
//! values; the targets are feasible iff they lie in the convex hull of those
//! columns. Assignments with identical term values are merged before solving.

mod simplex;

use std::collections::HashSet;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, Assignment, BoundResult, BoundsError, Expression};
use crate::labeling::{LabelingScheme, VariableTable};

pub use simplex::{phase_one, PhaseOne};

/// Largest variable count accepted (2^16 candidate support points).
pub const FEASIBILITY_VARIABLE_CAP: usize = 16;
const MAX_TERMS: usize = 64;
const WITNESS_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("expression has {variables} distinct variables, above the cap of {cap}")]
    Capacity { variables: usize, cap: usize },
    #[error("expected {expected} targets (one per term), got {got}")]
    TargetCount { expected: usize, got: usize },
    #[error("target {index} = {value} is outside [-1, 1]")]
    TargetOutOfRange { index: usize, value: f64 },
    #[error("expression has {0} terms; at most {MAX_TERMS} are supported")]
    TooManyTerms(usize),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityProblem {
    pub expression: Expression,
    pub labeling: LabelingScheme,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessAtom {
    /// Assignment index: bit i set means variable i is -1.
    pub index: u64,
    pub assignment: Assignment,
    pub probability: f64,
    /// Exact probability as `p/q`.
    pub exact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub labeling: LabelingScheme,
    pub variable_count: usize,
    pub targets: Vec<f64>,
    pub target_sum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<WitnessAtom>>,
    /// The expression's own bound, when the target sum falls outside it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<BoundResult>,
}

impl FeasibilityVerdict {
    /// Term expectations under the witness distribution.
    pub fn witness_moments(&self, expr: &Expression) -> Option<Vec<f64>> {
        let witness = self.witness.as_ref()?;
        let table = VariableTable::build(expr, self.labeling);
        let masks = bounds::term_masks(&table);
        Some(
            masks
                .iter()
                .map(|&m| {
                    witness
                        .iter()
                        .map(|w| {
                            let sign = if (w.index & m).count_ones() % 2 == 0 {
                                1.0
                            } else {
                                -1.0
                            };
                            sign * w.probability
                        })
                        .sum()
                })
                .collect(),
        )
    }
}

/// Distinct term-value columns, each tagged with the lowest assignment index
/// producing it. Column entries are +1/-1 per term, preceded by a 1 for the
/// normalization row.
fn moment_columns(table: &VariableTable) -> Vec<(u64, Vec<i8>)> {
    let masks = bounds::term_masks(table);
    let mut seen: HashSet<u64> = HashSet::new();
    let mut out = Vec::new();
    for x in 0..(1u64 << table.len()) {
        let pattern = masks.iter().enumerate().fold(0u64, |p, (t, &m)| {
            p | (u64::from((x & m).count_ones() & 1) << t)
        });
        if seen.insert(pattern) {
            let mut col = Vec::with_capacity(masks.len() + 1);
            col.push(1);
            col.extend((0..masks.len()).map(|t| if pattern >> t & 1 == 1 { -1 } else { 1 }));
            out.push((x, col));
        }
    }
    out
}

pub fn check_feasibility(
    problem: &FeasibilityProblem,
) -> Result<FeasibilityVerdict, FeasibilityError> {
    let expr = &problem.expression;
    let t = expr.term_count();
    if problem.targets.len() != t {
        return Err(FeasibilityError::TargetCount {
            expected: t,
            got: problem.targets.len(),
        });
    }
    for (index, &value) in problem.targets.iter().enumerate() {
        if !(-1.0..=1.0).contains(&value) {
            return Err(FeasibilityError::TargetOutOfRange { index, value });
        }
    }
    if t > MAX_TERMS {
        return Err(FeasibilityError::TooManyTerms(t));
    }
    let table = VariableTable::build(expr, problem.labeling);
    if table.len() > FEASIBILITY_VARIABLE_CAP {
        return Err(FeasibilityError::Capacity {
            variables: table.len(),
            cap: FEASIBILITY_VARIABLE_CAP,
        });
    }

    let columns = moment_columns(&table);
    let mut rhs = Vec::with_capacity(t + 1);
    rhs.push(BigRational::from_integer(1.into()));
    for &y in &problem.targets {
        rhs.push(BigRational::from_float(y).expect("finite target"));
    }
    let cols: Vec<Vec<i8>> = columns.iter().map(|(_, c)| c.clone()).collect();
    let result = simplex::phase_one(&cols, &rhs);
    let feasible = result.infeasibility.is_zero();

    let target_sum: f64 = problem.targets.iter().sum();
    let witness = feasible.then(|| {
        result
            .solution
            .iter()
            .filter_map(|(j, p)| {
                let probability = p.to_f64().unwrap_or(0.0);
                (probability > WITNESS_FLOOR).then(|| {
                    let index = columns[*j].0;
                    WitnessAtom {
                        index,
                        assignment: bounds::assignment_from_index(&table, index),
                        probability,
                        exact: p.to_string(),
                    }
                })
            })
            .collect::<Vec<_>>()
    });

    let certificate = if feasible || table.len() > bounds::DEFAULT_VARIABLE_CAP {
        None
    } else {
        let b = bounds::enumerate_bounds(expr, problem.labeling)?;
        let exact_sum: BigRational = rhs[1..].iter().sum();
        let below = exact_sum < BigRational::from_integer(b.min.into());
        let above = exact_sum > BigRational::from_integer(b.max.into());
        (below || above).then_some(b)
    };

    Ok(FeasibilityVerdict {
        feasible,
        labeling: problem.labeling,
        variable_count: table.len(),
        targets: problem.targets.clone(),
        target_sum,
        witness,
        certificate,
    })
}
