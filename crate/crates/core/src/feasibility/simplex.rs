//! Exact Phase-I simplex for `A p = b, p >= 0` with ±1 constraint columns.
//!
//! Revised form with an explicit basis inverse over `BigRational` and Bland's
//! rule for both entering and leaving choices, so it terminates without
//! tolerance parameters.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Outcome of Phase I.
#[derive(Debug, Clone)]
pub struct PhaseOne {
    /// Minimum total artificial mass; zero iff the system is feasible.
    pub infeasibility: BigRational,
    /// Values of structural columns that are basic and nonzero.
    pub solution: Vec<(usize, BigRational)>,
    pub pivots: usize,
}

/// Columns of the constraint matrix, each entry -1 or +1, all with the same
/// number of rows as `rhs`.
pub fn phase_one(columns: &[Vec<i8>], rhs: &[BigRational]) -> PhaseOne {
    let rows = rhs.len();
    let ncols = columns.len();
    debug_assert!(columns.iter().all(|c| c.len() == rows));

    // Flip rows so every right-hand side is nonnegative.
    let flip: Vec<bool> = rhs.iter().map(|b| b.is_negative()).collect();
    let entry = |j: usize, r: usize| -> i64 {
        if j < ncols {
            let v = columns[j][r] as i64;
            if flip[r] {
                -v
            } else {
                v
            }
        } else if j - ncols == r {
            1
        } else {
            0
        }
    };
    let cost = |j: usize| -> BigRational {
        if j < ncols {
            BigRational::zero()
        } else {
            BigRational::one()
        }
    };

    let mut basis: Vec<usize> = (0..rows).map(|r| ncols + r).collect();
    let mut is_basic = vec![false; ncols + rows];
    for &b in &basis {
        is_basic[b] = true;
    }
    let mut binv: Vec<Vec<BigRational>> = (0..rows)
        .map(|i| {
            (0..rows)
                .map(|k| {
                    if i == k {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    let mut xb: Vec<BigRational> = rhs.iter().map(|b| b.abs()).collect();
    let mut pivots = 0usize;

    loop {
        // Simplex multipliers y = c_B^T B^{-1}.
        let cb: Vec<BigRational> = basis.iter().map(|&j| cost(j)).collect();
        let y: Vec<BigRational> = (0..rows)
            .map(|k| {
                let mut acc = BigRational::zero();
                for i in 0..rows {
                    if !cb[i].is_zero() {
                        acc += &cb[i] * &binv[i][k];
                    }
                }
                acc
            })
            .collect();

        let entering = (0..ncols + rows).find(|&j| {
            if is_basic[j] {
                return false;
            }
            let mut d = cost(j);
            for (r, yr) in y.iter().enumerate() {
                match entry(j, r) {
                    1 => d -= yr,
                    -1 => d += yr,
                    _ => {}
                }
            }
            d.is_negative()
        });
        let Some(enter) = entering else {
            break;
        };

        // u = B^{-1} A_enter
        let u: Vec<BigRational> = (0..rows)
            .map(|i| {
                let mut acc = BigRational::zero();
                for r in 0..rows {
                    match entry(enter, r) {
                        1 => acc += &binv[i][r],
                        -1 => acc -= &binv[i][r],
                        _ => {}
                    }
                }
                acc
            })
            .collect();

        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..rows {
            if !u[i].is_positive() {
                continue;
            }
            let ratio = &xb[i] / &u[i];
            let better = match &leave {
                None => true,
                Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
            };
            if better {
                leave = Some((i, ratio));
            }
        }
        // Phase I is bounded below by zero, so a leaving row always exists.
        let (p, _) = leave.expect("phase one objective is bounded");

        let pivot = u[p].clone();
        for k in 0..rows {
            binv[p][k] /= &pivot;
        }
        xb[p] /= &pivot;
        let prow = binv[p].clone();
        let px = xb[p].clone();
        for i in 0..rows {
            if i == p || u[i].is_zero() {
                continue;
            }
            let f = u[i].clone();
            for k in 0..rows {
                binv[i][k] -= &f * &prow[k];
            }
            xb[i] -= &f * &px;
        }
        is_basic[basis[p]] = false;
        is_basic[enter] = true;
        basis[p] = enter;
        pivots += 1;
    }

    let mut infeasibility = BigRational::zero();
    let mut solution = Vec::new();
    for (i, &j) in basis.iter().enumerate() {
        if j >= ncols {
            infeasibility += &xb[i];
        } else if !xb[i].is_zero() {
            solution.push((j, xb[i].clone()));
        }
    }
    solution.sort_by_key(|(j, _)| *j);
    PhaseOne {
        infeasibility,
        solution,
        pivots,
    }
}
