use tertium::analysis::{self, AnalysisError};
use tertium::domain::{
    MeasurementEvent, Protocol, Schedule, ScheduleViolation, TermSlot, TimeRange,
};
use tertium::engine;
use tertium::experiment::ExperimentError;
use tertium::scenarios;
use tertium::{
    validate_schedule, Experiment, Expression, RunConfig, SettingId, StationId, TimeIndex,
};

fn event(station: &str, setting: &str, t: u64, feeds: &[(usize, usize)]) -> MeasurementEvent {
    MeasurementEvent {
        station: StationId::new(station).unwrap(),
        setting: SettingId::new(setting).unwrap(),
        time: TimeIndex(t),
        feeds: feeds.iter().map(|&(k, s)| TermSlot::new(k, s)).collect(),
    }
}

fn kinds(v: &[ScheduleViolation]) -> Vec<String> {
    v.iter()
        .map(|x| {
            serde_json::to_value(x).unwrap()["kind"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect()
}

fn single_pair() -> Expression {
    "a@L*b@R".parse().unwrap()
}

#[test]
fn materialized_protocols_are_valid() {
    for s in scenarios::registry() {
        let exp = Experiment::new(s.experiment).unwrap();
        let schedule = engine::materialize(exp.protocol(), &RunConfig::new(25, 1));
        assert_eq!(
            validate_schedule(&schedule, exp.expression()),
            vec![],
            "{}",
            s.name
        );
    }
}

#[test]
fn split_term_is_not_co_dated() {
    // the two factors of one term measured on different dates
    let expr = single_pair();
    let schedule = Schedule {
        trials: 2,
        events: vec![event("L", "a", 0, &[(0, 0)]), event("R", "b", 1, &[(0, 1)])],
        grouping: vec![TimeRange {
            start: 0,
            end: 2,
            terms: vec![0],
        }],
    };
    let v = validate_schedule(&schedule, &expr);
    let k = kinds(&v);
    assert!(k.contains(&"term_not_co_dated".to_string()), "{k:?}");
    assert!(k.contains(&"slot_missing".to_string()));
    assert!(v
        .iter()
        .any(|x| x.to_string().contains("term not co-dated")));
}

#[test]
fn station_measuring_twice_at_one_time() {
    let expr: Expression = "a@L*b@R + c@L*b@R:0".parse().unwrap();
    let schedule = Schedule {
        trials: 1,
        events: vec![
            event("L", "a", 0, &[(0, 0)]),
            event("R", "b", 0, &[(0, 1), (1, 1)]),
            event("L", "c", 0, &[(1, 0)]),
        ],
        grouping: vec![TimeRange {
            start: 0,
            end: 1,
            terms: vec![0, 1],
        }],
    };
    let k = kinds(&validate_schedule(&schedule, &expr));
    assert_eq!(k, ["station_repeated_at_time"]);
}

#[test]
fn assorted_structural_violations() {
    let expr = single_pair();
    let schedule = Schedule {
        trials: 2,
        events: vec![
            event("L", "a", 1, &[(0, 0)]),
            event("R", "b", 1, &[(0, 1)]),
            event("L", "a", 0, &[(0, 0)]),
            event("R", "c", 0, &[(0, 1)]),
            event("R", "b", 0, &[]),
            event("L", "a", 5, &[(3, 0)]),
        ],
        grouping: vec![TimeRange {
            start: 0,
            end: 2,
            terms: vec![0],
        }],
    };
    let k = kinds(&validate_schedule(&schedule, &expr));
    for want in [
        "events_out_of_order",
        "slot_mismatch",
        "empty_feeds",
        "time_out_of_range",
        "unknown_term_slot",
        "station_repeated_at_time",
    ] {
        assert!(k.iter().any(|x| x == want), "{want} missing from {k:?}");
    }
}

#[test]
fn slot_filled_twice_and_grouping_mismatch() {
    let expr = single_pair();
    let schedule = Schedule {
        trials: 2,
        events: vec![
            event("L", "a", 0, &[(0, 0)]),
            event("R", "b", 0, &[(0, 1)]),
            event("L", "a", 1, &[(0, 0)]),
            event("R", "b", 1, &[(0, 1), (0, 1)]),
        ],
        grouping: vec![TimeRange {
            start: 0,
            end: 1,
            terms: vec![0],
        }],
    };
    let v = validate_schedule(&schedule, &expr);
    assert!(
        kinds(&v).contains(&"slot_filled_twice".to_string()),
        "{v:?}"
    );
    // the grouping leaves t=1 uncovered
    assert!(
        v.contains(&ScheduleViolation::GroupingMismatch { time: 1 }),
        "{v:?}"
    );
    let mut wrong = schedule.clone();
    wrong.grouping[0].terms = vec![];
    assert!(
        validate_schedule(&wrong, &expr).contains(&ScheduleViolation::GroupingMismatch { time: 0 })
    );
}

#[test]
fn per_trial_sums_need_co_dated_terms() {
    let exp = Experiment::new(scenarios::get("two-doctors-evenodd").unwrap().experiment).unwrap();
    let log = engine::run(&exp, &RunConfig::new(9, 1)).unwrap();
    match analysis::gamma_per_trial(&log, exp.expression()) {
        Err(AnalysisError::NotCoDated { time: 0, measured }) => assert_eq!(measured, vec![0]),
        other => panic!("{other:?}"),
    }
    let report = analysis::mean_correlations(&log, exp.expression()).unwrap();
    assert_eq!(report.gamma_per_trial, None);
}

#[test]
fn co_dated_mean_equals_mean_of_per_trial_sums() {
    for (name, n) in [("three-doctors", 997u64), ("quantum-triple", 1013)] {
        let exp = Experiment::new(scenarios::get(name).unwrap().experiment).unwrap();
        let log = engine::run(&exp, &RunConfig::new(n, 4)).unwrap();
        let g = analysis::gamma_per_trial(&log, exp.expression()).unwrap();
        let report = analysis::mean_correlations(&log, exp.expression()).unwrap();
        let mean = g.iter().sum::<i64>() as f64 / g.len() as f64;
        assert_eq!(report.gamma_mean, mean, "{name}");
        assert!(g.iter().all(|&x| x >= -3));
    }
}

#[test]
fn tampered_log_is_rejected() {
    let exp = Experiment::new(scenarios::get("three-doctors").unwrap().experiment).unwrap();
    let mut log = engine::run(&exp, &RunConfig::new(5, 1)).unwrap();
    log.observations[2].station = StationId::new("Lyon").unwrap();
    assert_eq!(
        analysis::mean_correlations(&log, exp.expression()).unwrap_err(),
        AnalysisError::InconsistentLog
    );
}

#[test]
fn experiment_definition_checks() {
    let base = scenarios::get("two-doctors-evenodd").unwrap().experiment;

    let mut d = base.clone();
    d.stations.push(d.stations[0].clone());
    assert!(matches!(
        Experiment::new(d),
        Err(ExperimentError::Duplicate { .. })
    ));

    let mut d = base.clone();
    d.stations.pop();
    assert!(matches!(
        Experiment::new(d),
        Err(ExperimentError::UnknownReference { .. })
    ));

    let mut d = base.clone();
    d.schedule.groups.pop();
    assert!(matches!(
        Experiment::new(d),
        Err(ExperimentError::UnmeasuredTerm(2))
    ));

    let mut d = base.clone();
    d.schedule.groups[1].events.clear();
    assert!(matches!(
        Experiment::new(d),
        Err(ExperimentError::EmptyGroup(1))
    ));

    let mut d = base.clone();
    d.schedule = Protocol { groups: vec![] };
    assert!(matches!(
        Experiment::new(d),
        Err(ExperimentError::EmptySchedule)
    ));

    // singlet pairs need exactly two events per group
    let mut d = scenarios::get("quantum-singlet-pairs").unwrap().experiment;
    d.schedule.groups[0].events.pop();
    d.schedule
        .groups
        .push(Protocol::one_term_per_date(&d.expression).groups[0].clone());
    assert!(Experiment::new(d).is_err());

    let text = serde_json::to_string(&base)
        .unwrap()
        .replacen('{', r#"{"extra": 1, "#, 1);
    assert!(matches!(
        Experiment::from_json(&text),
        Err(ExperimentError::Parse(_))
    ));
}
