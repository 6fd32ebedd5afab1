//! Estimators over trial logs and inequality verdicts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundResult, Expression};
use crate::domain::{validate_schedule, SettingId, StationId, TrialLog};
use crate::experiment::join_violations;
use crate::labeling::LabelingScheme;

/// Standard errors beyond a bound before a violation is declared.
pub const VIOLATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("log observations do not match its schedule")]
    InconsistentLog,
    #[error("log schedule does not fit the expression: {0}")]
    InvalidSchedule(String),
    #[error("time index {time} does not measure every term (measured {measured:?}); per-trial sums need all terms co-dated")]
    NotCoDated { time: u64, measured: Vec<usize> },
    #[error("term {0} was never sampled")]
    EmptyTerm(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub term: usize,
    pub estimate: f64,
    pub count: u64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleMarginal {
    pub setting: SettingId,
    pub station: StationId,
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Respected,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    /// Distance outside the bound (positive) or inside it (negative).
    pub margin: f64,
    /// `margin / std_error`; absent when the estimate has no sampling error.
    pub z_score: Option<f64>,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeVerdict {
    pub scheme: LabelingScheme,
    pub bound_min: i64,
    pub bound_max: i64,
    pub nontrivial: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub per_term: Vec<TermEstimate>,
    /// Present only when every time index measures every term.
    pub gamma_per_trial: Option<Vec<i64>>,
    pub gamma_mean: f64,
    pub gamma_std_error: f64,
    pub singles: Vec<SingleMarginal>,
    pub verdicts: Vec<SchemeVerdict>,
}

impl CorrelationReport {
    /// Adds the verdict for one labeling scheme's bound.
    pub fn judge(&mut self, bound: &BoundResult) -> &SchemeVerdict {
        self.verdicts.push(SchemeVerdict {
            scheme: bound.scheme,
            bound_min: bound.min,
            bound_max: bound.max,
            nontrivial: bound.nontrivial,
            verdict: verdict(self, bound),
        });
        self.verdicts.last().expect("just pushed")
    }

    pub fn verdict_for(&self, scheme: LabelingScheme) -> Option<&SchemeVerdict> {
        self.verdicts.iter().find(|v| v.scheme == scheme)
    }

    /// CSV rows `term,estimate,count,std_error`.
    pub fn write_summary_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.per_term {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per time index: which terms were measured and each measured term's product.
fn products_by_time(
    log: &TrialLog,
    expr: &Expression,
) -> Result<Vec<Vec<(usize, i64)>>, AnalysisError> {
    if !log.is_consistent() {
        return Err(AnalysisError::InconsistentLog);
    }
    let violations = validate_schedule(&log.schedule, expr);
    if !violations.is_empty() {
        return Err(AnalysisError::InvalidSchedule(join_violations(&violations)));
    }
    let events = &log.schedule.events;
    Ok(log
        .schedule
        .group_spans()
        .into_iter()
        .map(|span| {
            let mut products: BTreeMap<usize, i64> = BTreeMap::new();
            for i in span {
                let v = log.observations[i].value.get();
                for feed in &events[i].feeds {
                    *products.entry(feed.term).or_insert(1) *= v;
                }
            }
            products.into_iter().collect()
        })
        .collect())
}

/// Sum of term products at every time index. Requires all terms co-dated.
pub fn gamma_per_trial(log: &TrialLog, expr: &Expression) -> Result<Vec<i64>, AnalysisError> {
    let t = expr.term_count();
    products_by_time(log, expr)?
        .into_iter()
        .enumerate()
        .map(|(time, prods)| {
            if prods.len() != t {
                return Err(AnalysisError::NotCoDated {
                    time: time as u64,
                    measured: prods.iter().map(|(k, _)| *k).collect(),
                });
            }
            Ok(prods.iter().map(|(_, p)| p).sum())
        })
        .collect()
}

fn std_error(sum: i64, count: u64) -> f64 {
    // Values are ±1, so the sum of squares equals the count.
    if count < 2 {
        return 0.0;
    }
    let n = count as f64;
    let mean = sum as f64 / n;
    let var = ((n - n * mean * mean) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Per-term sample means, their sum, and singles marginals.
pub fn mean_correlations(
    log: &TrialLog,
    expr: &Expression,
) -> Result<CorrelationReport, AnalysisError> {
    let t = expr.term_count();
    let by_time = products_by_time(log, expr)?;
    let mut sums = vec![0i64; t];
    let mut counts = vec![0u64; t];
    let mut co_dated = true;
    let mut gammas = Vec::with_capacity(by_time.len());
    for prods in &by_time {
        for &(k, p) in prods {
            sums[k] += p;
            counts[k] += 1;
        }
        co_dated &= prods.len() == t;
        if co_dated {
            gammas.push(prods.iter().map(|(_, p)| p).sum::<i64>());
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(AnalysisError::EmptyTerm(k));
    }
    let per_term: Vec<TermEstimate> = (0..t)
        .map(|k| TermEstimate {
            term: k,
            estimate: sums[k] as f64 / counts[k] as f64,
            count: counts[k],
            std_error: std_error(sums[k], counts[k]),
        })
        .collect();

    // With equal counts a single division keeps the mean exactly equal to the
    // mean of the per-trial sums.
    let gamma_mean = if counts.iter().all(|&c| c == counts[0]) {
        sums.iter().sum::<i64>() as f64 / counts[0] as f64
    } else {
        per_term.iter().map(|e| e.estimate).sum()
    };
    let gamma_per_trial = co_dated.then_some(gammas);
    let gamma_std_error = match &gamma_per_trial {
        Some(g) if g.len() > 1 => {
            let n = g.len() as f64;
            let mean = g.iter().sum::<i64>() as f64 / n;
            let ss: f64 = g.iter().map(|&x| (x as f64 - mean).powi(2)).sum();
            (ss / (n - 1.0) / n).sqrt()
        }
        Some(_) => 0.0,
        None => per_term
            .iter()
            .map(|e| e.std_error * e.std_error)
            .sum::<f64>()
            .sqrt(),
    };

    let mut singles: BTreeMap<(SettingId, StationId), (i64, u64)> = BTreeMap::new();
    for o in &log.observations {
        let e = singles
            .entry((o.setting.clone(), o.station.clone()))
            .or_default();
        e.0 += o.value.get();
        e.1 += 1;
    }
    let singles = singles
        .into_iter()
        .map(|((setting, station), (sum, count))| SingleMarginal {
            setting,
            station,
            mean: sum as f64 / count as f64,
            count,
        })
        .collect();

    Ok(CorrelationReport {
        per_term,
        gamma_per_trial,
        gamma_mean,
        gamma_std_error,
        singles,
        verdicts: Vec::new(),
    })
}

/// Compares the estimated sum against a bound with a 3-standard-error margin.
pub fn verdict(report: &CorrelationReport, bound: &BoundResult) -> Verdict {
    let g = report.gamma_mean;
    let se = report.gamma_std_error;
    let (min, max) = (bound.min as f64, bound.max as f64);
    let margin = if g < min {
        min - g
    } else if g > max {
        g - max
    } else {
        // + 0.0 turns -0.0 into 0.0 when the estimate sits on the bound
        -(g - min).min(max - g) + 0.0
    };
    let tol = VIOLATION_SIGMAS * se;
    let violated = g < min - tol || g > max + tol;
    Verdict {
        status: if violated {
            VerdictStatus::Violated
        } else {
            VerdictStatus::Respected
        },
        margin,
        z_score: (se > 0.0).then(|| margin / se),
        std_error: se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::enumerate_bounds;

    fn report(gamma: f64, se: f64) -> CorrelationReport {
        CorrelationReport {
            per_term: vec![],
            gamma_per_trial: None,
            gamma_mean: gamma,
            gamma_std_error: se,
            singles: vec![],
            verdicts: vec![],
        }
    }

    #[test]
    fn verdict_examples() {
        let lg = Expression::leggett_garg_three_station();
        let only = enumerate_bounds(&lg, LabelingScheme::SettingOnly).unwrap();
        let full = enumerate_bounds(&lg, LabelingScheme::FullyDistinct).unwrap();
        let v = verdict(&report(-3.0, 0.0), &only);
        assert_eq!(v.status, VerdictStatus::Violated);
        assert_eq!(v.margin, 2.0);
        assert_eq!(v.z_score, None);
        assert_eq!(
            verdict(&report(-3.0, 0.0), &full).status,
            VerdictStatus::Respected
        );
        assert_eq!(
            verdict(&report(-1.5, 0.005), &only).status,
            VerdictStatus::Violated
        );
        // within three standard errors of the bound
        let close = verdict(&report(-1.01, 0.005), &only);
        assert_eq!(close.status, VerdictStatus::Respected);
        assert!((close.z_score.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn std_error_of_constant_sample_is_zero() {
        assert_eq!(std_error(-10, 10), 0.0);
        assert_eq!(std_error(1, 1), 0.0);
        // half +1, half -1: sample variance n/(n-1)
        let se = std_error(0, 4);
        assert!((se - (4.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
