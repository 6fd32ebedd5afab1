//! Reference implementations used as oracles by the integration tests.
//! Nothing here calls into the library's enumeration or LP code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tertium::bounds::{Slot, Term};
use tertium::{Expression, LabelingScheme, SettingId, StationId};

/// Variable key rebuilt from first principles: which descriptor fields a
/// scheme keeps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    setting: String,
    station: Option<String>,
    parity: Option<bool>,
    time: Option<u64>,
    serial: Option<usize>,
}

pub fn key(setting: &str, station: &str, time: u64, serial: usize, scheme: LabelingScheme) -> Key {
    use LabelingScheme::*;
    let level = match scheme {
        SettingOnly => 0,
        SettingStation => 1,
        SettingStationParity => 2,
        SettingStationTime => 3,
        FullyDistinct => 4,
    };
    Key {
        setting: setting.to_string(),
        station: (level >= 1).then(|| station.to_string()),
        parity: (level == 2).then_some(time % 2 == 0),
        time: (level >= 3).then_some(time),
        serial: (level == 4).then_some(serial),
    }
}

/// `vars[term][slot]` as indices into a first-appearance ordering.
pub fn variables(expr: &Expression, scheme: LabelingScheme) -> (usize, Vec<Vec<usize>>) {
    let mut seen: Vec<Key> = Vec::new();
    let mut serial = 0;
    let mut out = Vec::new();
    for (ti, term) in expr.terms.iter().enumerate() {
        let time = term.date.unwrap_or(ti as u64);
        let mut row = Vec::new();
        for s in &term.slots {
            let k = key(s.setting.as_str(), s.station.as_str(), time, serial, scheme);
            serial += 1;
            let idx = match seen.iter().position(|x| *x == k) {
                Some(i) => i,
                None => {
                    seen.push(k);
                    seen.len() - 1
                }
            };
            row.push(idx);
        }
        out.push(row);
    }
    (seen.len(), out)
}

/// Every ±1 assignment, counted from all-minus upward as a little odometer.
pub fn assignments(n: usize) -> impl Iterator<Item = Vec<i64>> {
    let mut cur = Some(vec![-1i64; n]);
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut i = 0;
        loop {
            if i == n {
                cur = None;
                break;
            }
            if next[i] == -1 {
                next[i] = 1;
                cur = Some(next);
                break;
            }
            next[i] = -1;
            i += 1;
        }
        Some(out)
    })
}

/// Term products for one assignment.
pub fn moments(vars: &[Vec<usize>], x: &[i64]) -> Vec<i64> {
    vars.iter()
        .map(|row| row.iter().map(|&v| x[v]).product())
        .collect()
}

/// Brute-force (min, max) of the expression.
pub fn brute_bounds(expr: &Expression, scheme: LabelingScheme) -> (i64, i64) {
    let (n, vars) = variables(expr, scheme);
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for x in assignments(n) {
        let s: i64 = moments(&vars, &x).iter().sum();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

/// Distinct vertex moment vectors of the correlation polytope.
pub fn vertices(expr: &Expression, scheme: LabelingScheme) -> Vec<Vec<f64>> {
    let (n, vars) = variables(expr, scheme);
    let mut out: Vec<Vec<i64>> = assignments(n).map(|x| moments(&vars, &x)).collect();
    out.sort();
    out.dedup();
    out.into_iter()
        .map(|v| v.into_iter().map(|x| x as f64).collect())
        .collect()
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Point-in-convex-hull by Carathéodory: `y` is in the hull iff it is a convex
/// combination of some affinely independent subset of at most `dim + 1`
/// vertices. Each subset is solved by least squares (normal equations).
pub fn in_hull(points: &[Vec<f64>], y: &[f64]) -> bool {
    let dim = y.len();
    for k in 1..=points.len().min(dim + 1) {
        for s in subsets(points.len(), k) {
            // columns: [p; 1] for p in subset
            let col = |j: usize, r: usize| if r < dim { points[s[j]][r] } else { 1.0 };
            let rhs = |r: usize| if r < dim { y[r] } else { 1.0 };
            let gram: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| (0..=dim).map(|r| col(i, r) * col(j, r)).sum())
                        .collect()
                })
                .collect();
            let proj: Vec<f64> = (0..k)
                .map(|i| (0..=dim).map(|r| col(i, r) * rhs(r)).sum())
                .collect();
            let Some(lambda) = solve(gram, proj) else {
                continue;
            };
            if lambda.iter().any(|&l| l < -1e-9) {
                continue;
            }
            let resid: f64 = (0..=dim)
                .map(|r| {
                    let fit: f64 = (0..k).map(|j| col(j, r) * lambda[j]).sum();
                    (fit - rhs(r)).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            if resid < 1e-7 {
                return true;
            }
        }
    }
    false
}

pub const SETTINGS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
pub const STATIONS: [&str; 3] = ["L", "M", "R"];

pub fn slot(setting: &str, station: &str) -> Slot {
    Slot {
        setting: SettingId::new(setting).unwrap(),
        station: StationId::new(station).unwrap(),
    }
}

/// Random pairwise expression over small setting/station pools, with random
/// date labels, shaped so that variables are often shared.
pub fn random_pairwise<R: Rng>(rng: &mut R, max_terms: usize, settings: usize) -> Expression {
    let t = rng.random_range(1..=max_terms);
    let terms = (0..t)
        .map(|_| {
            let mut pick = || {
                slot(
                    SETTINGS[rng.random_range(0..settings)],
                    STATIONS[rng.random_range(0..STATIONS.len())],
                )
            };
            let slots = vec![pick(), pick()];
            let mut term = Term::new(slots);
            if rng.random_bool(0.5) {
                term.date = Some(rng.random_range(0..3));
            }
            term
        })
        .collect();
    Expression::new(terms).unwrap()
}

pub fn random_scheme<R: Rng>(rng: &mut R) -> LabelingScheme {
    LabelingScheme::ALL[rng.random_range(0..LabelingScheme::ALL.len())]
}

/// Sum of the expression under a library-style assignment map, computed by
/// looking each slot's key up through the public labeling function.
pub fn evaluate_map(
    expr: &Expression,
    scheme: LabelingScheme,
    values: &BTreeMap<tertium::LogicalVariableId, tertium::OutcomeValue>,
) -> i64 {
    let mut serial = 0;
    let mut total = 0;
    for (ti, term) in expr.terms.iter().enumerate() {
        let mut p = 1;
        for s in &term.slots {
            let id = tertium::label(&s.setting, &s.station, term.date(ti), serial, scheme);
            serial += 1;
            p *= values[&id].get();
        }
        total += p;
    }
    total
}
