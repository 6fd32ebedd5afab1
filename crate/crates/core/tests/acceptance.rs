//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed. Built with `harness = false` so the
//! lines always show up in `cargo test` output.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tertium::bounds::{Slot, Term};
use tertium::domain::Protocol;
use tertium::models::{JointTripleModel, QuantumSingletModel};
use tertium::scenarios::{self, run_experiment};
use tertium::{
    check_feasibility, detect_cyclicity, enumerate_bounds, Experiment, ExperimentDef, Expression,
    FeasibilityProblem, LabelingScheme, Model, Overrides, RunConfig, Setting, SettingId, StationId,
    VerdictStatus,
};

use LabelingScheme::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_lg_bounds() -> Outcome {
    let lg = Expression::leggett_garg_three_station();
    let only = enumerate_bounds(&lg, SettingOnly).map_err(|e| e.to_string())?;
    let full = enumerate_bounds(&lg, FullyDistinct).map_err(|e| e.to_string())?;
    check(only.min == -1, || format!("setting-only min {}", only.min))?;
    check(full.min == -3, || {
        format!("fully-distinct min {}", full.min)
    })?;
    Ok(format!(
        "setting-only min {}, fully-distinct min {}",
        only.min, full.min
    ))
}

fn c2_two_doctors() -> Outcome {
    let run = tertium::run_scenario(
        "two-doctors-evenodd",
        &Overrides {
            trials: Some(10_000),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let c = &run.report.correlations;
    let est: Vec<f64> = c.per_term.iter().map(|t| t.estimate).collect();
    check(est == [-1.0, -1.0, -1.0], || format!("per-term {est:?}"))?;
    check(c.gamma_mean == -3.0, || {
        format!("gamma_mean {}", c.gamma_mean)
    })?;
    let worst = c.singles.iter().map(|s| s.mean.abs()).fold(0.0, f64::max);
    check(worst <= 0.05, || format!("singles |mean| up to {worst}"))?;
    let status = |s| c.verdict_for(s).map(|v| v.verdict.status);
    check(status(SettingOnly) == Some(VerdictStatus::Violated), || {
        "setting-only not violated".into()
    })?;
    for s in [SettingStationParity, FullyDistinct] {
        check(status(s) == Some(VerdictStatus::Respected), || {
            format!("{s} not respected")
        })?;
    }
    Ok(format!(
        "per-term {est:?}, gamma_mean {}, max |single| {worst:.4}",
        c.gamma_mean
    ))
}

fn single_pair_experiment(theta: f64) -> Experiment {
    let x = SettingId::new("x").unwrap();
    let y = SettingId::new("y").unwrap();
    let (l, r) = (StationId::new("L").unwrap(), StationId::new("R").unwrap());
    let expression = Expression::new(vec![Term::new(vec![
        Slot {
            setting: x.clone(),
            station: l.clone(),
        },
        Slot {
            setting: y.clone(),
            station: r.clone(),
        },
    ])])
    .unwrap();
    Experiment::new(ExperimentDef {
        name: None,
        settings: vec![Setting::at_angle(x, 0.0), Setting::at_angle(y, theta)],
        stations: vec![l, r],
        schedule: Protocol::one_term_per_date(&expression),
        expression,
        model: Model::QuantumSinglet(QuantumSingletModel {}),
        labeling: None,
    })
    .unwrap()
}

fn c3_singlet_law() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..12 {
        let theta = 15.0 * k as f64;
        let exp = single_pair_experiment(theta);
        let run = run_experiment(
            "singlet",
            &exp,
            &RunConfig::new(100_000, 1000 + k),
            &[SettingOnly],
        )
        .map_err(|e| e.to_string())?;
        let e = run.report.correlations.per_term[0].estimate;
        let expected = -theta.to_radians().cos();
        let dev = (e - expected).abs();
        worst = worst.max(dev);
        check(dev <= 0.02, || {
            format!("theta {theta}: E {e} vs {expected}")
        })?;
    }
    Ok(format!("12 angles, max |E + cos| = {worst:.4}"))
}

fn c4_sixty_degrees() -> Outcome {
    let run = tertium::run_scenario("quantum-singlet-pairs", &Overrides::default())
        .map_err(|e| e.to_string())?;
    let c = &run.report.correlations;
    check((c.gamma_mean + 1.5).abs() <= 0.02, || {
        format!("gamma_mean {}", c.gamma_mean)
    })?;
    let only = c
        .verdict_for(SettingOnly)
        .ok_or("no setting-only verdict")?;
    check(
        only.bound_min == -1 && only.verdict.status == VerdictStatus::Violated,
        || format!("vs -1: {only:?}"),
    )?;
    let full = c
        .verdict_for(FullyDistinct)
        .ok_or("no fully-distinct verdict")?;
    check(
        full.bound_min == -3 && full.verdict.status == VerdictStatus::Respected,
        || format!("vs -3: {full:?}"),
    )?;
    Ok(format!(
        "N {}, gamma_mean {:.4} ± {:.4}",
        run.report.config.trials, c.gamma_mean, c.gamma_std_error
    ))
}

fn random_triple<R: Rng>(rng: &mut R) -> [f64; 8] {
    let mut p = [0.0; 8];
    // Sometimes sparse, so the extreme vertices get exercised.
    let support = rng.random_range(1..=8);
    for _ in 0..support {
        p[rng.random_range(0..8)] += -rng.random::<f64>().max(1e-12).ln();
    }
    let sum: f64 = p.iter().sum();
    p.map(|x| x / sum)
}

fn c5_joint_triple() -> Outcome {
    let base = scenarios::get("quantum-triple").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut trials = 0u64;
    let mut lowest = f64::INFINITY;
    for i in 0..1000 {
        let mut def = base.experiment.clone();
        let Model::JointTriple(JointTripleModel { settings, .. }) = &def.model else {
            return Err("quantum-triple is not a joint-triple model".into());
        };
        def.model = Model::JointTriple(JointTripleModel {
            settings: settings.clone(),
            probabilities: random_triple(&mut rng),
        });
        let exp = Experiment::new(def).map_err(|e| e.to_string())?;
        let config = RunConfig::new(200, rng.random());
        let run =
            run_experiment("triple", &exp, &config, &[SettingOnly]).map_err(|e| e.to_string())?;
        let c = &run.report.correlations;
        let per_trial = c.gamma_per_trial.as_ref().ok_or("not co-dated")?;
        if let Some(g) = per_trial.iter().find(|&&g| g < -1) {
            return Err(format!("distribution {i}: a trial has gamma {g}"));
        }
        check(c.gamma_mean >= -1.0, || {
            format!("distribution {i}: gamma_mean {}", c.gamma_mean)
        })?;
        trials += per_trial.len() as u64;
        lowest = lowest.min(c.gamma_mean);
    }
    Ok(format!(
        "1000 distributions, {trials} trials, lowest gamma_mean {lowest}"
    ))
}

/// The 500 random expressions shared by criteria 6 and 8.
fn random_expressions() -> Vec<(Expression, LabelingScheme)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut out = Vec::new();
    while out.len() < 500 {
        let expr = common::random_pairwise(&mut rng, 8, 5);
        let scheme = common::random_scheme(&mut rng);
        if common::variables(&expr, scheme).0 <= 12 {
            out.push((expr, scheme));
        }
    }
    out
}

fn c6_bounds_oracle() -> Outcome {
    let mut nontrivial = 0;
    for (i, (expr, scheme)) in random_expressions().iter().enumerate() {
        let got = enumerate_bounds(expr, *scheme).map_err(|e| e.to_string())?;
        let (lo, hi) = common::brute_bounds(expr, *scheme);
        check(got.min == lo && got.max == hi, || {
            format!(
                "#{i} {expr} under {scheme}: got [{}, {}], oracle [{lo}, {hi}]",
                got.min, got.max
            )
        })?;
        let (n, _) = common::variables(expr, *scheme);
        check(got.variable_count == n, || {
            format!("#{i}: {} variables vs {n}", got.variable_count)
        })?;
        let at_witness = common::evaluate_map(expr, *scheme, &got.witness_min);
        check(at_witness == lo, || {
            format!("#{i}: witness gives {at_witness}, min {lo}")
        })?;
        nontrivial += got.nontrivial as usize;
    }
    Ok(format!(
        "500 expressions agree ({nontrivial} with nontrivial bounds)"
    ))
}

fn c7_feasibility_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut feasible, mut done) = (0, 0);
    let mut worst: f64 = 0.0;
    while done < 200 {
        let expr = common::random_pairwise(&mut rng, 4, 3);
        let scheme = common::random_scheme(&mut rng);
        if common::variables(&expr, scheme).0 > 4 {
            continue;
        }
        let verts = common::vertices(&expr, scheme);
        let t = expr.term_count();
        let targets: Vec<f64> = match done % 3 {
            // inside: random mixture of vertices
            0 => {
                let w: Vec<f64> = verts.iter().map(|_| rng.random::<f64>()).collect();
                let s: f64 = w.iter().sum();
                (0..t)
                    .map(|k| verts.iter().zip(&w).map(|(v, wi)| v[k] * wi / s).sum())
                    .collect()
            }
            // anywhere in the cube
            1 => (0..t).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            // pushed past a vertex mixture toward the cube corner
            _ => {
                let v = &verts[rng.random_range(0..verts.len())];
                (0..t)
                    .map(|k| (v[k] * 0.9 - 0.3 * rng.random::<f64>()).clamp(-1.0, 1.0))
                    .collect()
            }
        };
        let targets: Vec<f64> = targets
            .iter()
            .map(|x| (x * 1000.0).round() / 1000.0)
            .collect();
        let verdict = check_feasibility(&FeasibilityProblem {
            expression: expr.clone(),
            labeling: scheme,
            targets: targets.clone(),
        })
        .map_err(|e| e.to_string())?;
        let oracle = common::in_hull(&verts, &targets);
        check(verdict.feasible == oracle, || {
            format!(
                "{expr} under {scheme}, targets {targets:?}: lp {} vs hull {oracle}",
                verdict.feasible
            )
        })?;
        if verdict.feasible {
            let m = verdict
                .witness_moments(&expr)
                .ok_or("feasible without witness")?;
            for (a, b) in m.iter().zip(&targets) {
                worst = worst.max((a - b).abs());
            }
            check(worst <= 1e-7, || {
                format!("witness off by {worst} for {targets:?}")
            })?;
            feasible += 1;
        }
        done += 1;
    }
    Ok(format!(
        "200 tuples agree ({feasible} feasible, {} infeasible), witness error {worst:.1e}",
        200 - feasible
    ))
}

fn c8_cycles() -> Outcome {
    let mut nontrivial = 0;
    for (i, (expr, scheme)) in random_expressions().iter().enumerate() {
        let b = enumerate_bounds(expr, *scheme).map_err(|e| e.to_string())?;
        if b.nontrivial {
            nontrivial += 1;
            let c = detect_cyclicity(expr, *scheme);
            check(c.has_cycle, || {
                format!("#{i} {expr} under {scheme}: nontrivial without a cycle")
            })?;
        }
    }
    Ok(format!(
        "0 counterexamples among {nontrivial} nontrivial bounds"
    ))
}

fn run_bytes(name: &str, threads: usize) -> Result<Vec<u8>, String> {
    let run = tertium::run_scenario(
        name,
        &Overrides {
            threads: Some(threads),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let mut out = serde_json::to_vec(&run.report).map_err(|e| e.to_string())?;
    out.extend(serde_json::to_vec(&run.log).map_err(|e| e.to_string())?);
    tertium::engine::write_jsonl(&run.log, &mut out).map_err(|e| e.to_string())?;
    tertium::engine::write_csv(&run.log, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn c9_determinism() -> Outcome {
    let mut total = 0;
    for info in tertium::list_scenarios() {
        let reference = run_bytes(&info.name, 1)?;
        for threads in [1, 8, 8] {
            check(run_bytes(&info.name, threads)? == reference, || {
                format!("{} differs under {threads} threads", info.name)
            })?;
        }
        total += reference.len();
    }
    Ok(format!(
        "{} scenarios identical under 1 and 8 threads ({} MB compared per run)",
        tertium::list_scenarios().len(),
        total / 1_000_000
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 9] = [
        (
            1,
            "LG bound reproduction",
            Duration::from_secs(1),
            c1_lg_bounds,
        ),
        (
            2,
            "counterexample reproduction",
            Duration::from_secs(5),
            c2_two_doctors,
        ),
        (
            3,
            "singlet correlation law",
            Duration::from_secs(30),
            c3_singlet_law,
        ),
        (
            4,
            "pairwise-60 singlet sum",
            Duration::from_secs(30),
            c4_sixty_degrees,
        ),
        (
            5,
            "joint-triple sum property",
            Duration::from_secs(30),
            c5_joint_triple,
        ),
        (
            6,
            "bounds oracle equivalence",
            Duration::from_secs(60),
            c6_bounds_oracle,
        ),
        (
            7,
            "feasibility oracle equivalence",
            Duration::from_secs(60),
            c7_feasibility_oracle,
        ),
        (8, "cyclicity necessity", Duration::MAX, c8_cycles),
        (
            9,
            "determinism across threads",
            Duration::MAX,
            c9_determinism,
        ),
    ];
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(e) => (false, e),
        };
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" / {:?}", limit)
        };
        println!(
            "{} [{n}] {name}: {detail} ({:.2?}{budget})",
            if ok { "PASS" } else { "FAIL" },
            took
        );
        failed += !ok as u32;
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
