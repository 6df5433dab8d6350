use chrono::Duration;
use prpm_core::sim::{replay, replay_traced, Action};
use prpm_core::{DurationConfig, DurationKind, Policy, SimConfig};
use prpm_testkit::audit::audit;
use prpm_testkit::fixtures::{
    epoch, harmful_high_risk_scenario, random_config, random_scenario, rng, table1_config, table1_scenario,
};
use prpm_testkit::oracle::naive_replay;

#[test]
fn example_walkthrough() {
    let s = table1_scenario();
    let cfg = table1_config();
    let (r, trace) = replay_traced(&s.log, &s.scores, &cfg).unwrap();
    assert_eq!(r.allocation_order, ["A", "B", "E", "D"]);
    assert!((r.total_gain - (5.0 + 1.4 + 3.4 + 1.6)).abs() < 1e-9);

    let allocs: Vec<(String, i64)> = trace
        .iter()
        .filter(|d| d.action == Action::Allocate)
        .map(|d| (d.case_id.clone().unwrap(), (d.instant - epoch()).num_seconds()))
        .collect();
    let expected = [("A", 0), ("B", 10), ("E", 600), ("D", 610)];
    assert_eq!(allocs.len(), expected.len());
    for ((id, t), (eid, et)) in allocs.iter().zip(expected) {
        assert_eq!((id.as_str(), *t), (eid, et));
    }
    for never in ["C", "F"] {
        assert!(trace.iter().all(|d| d.case_id.as_deref() != Some(never)), "{never} reached the queue");
    }
    // D and E waited in the queue while both resources were busy.
    let at_e = trace.iter().find(|d| d.action == Action::Upsert && d.case_id.as_deref() == Some("E")).unwrap();
    assert_eq!((at_e.busy, at_e.queue_len), (2, 2));
    audit(&r, &trace, &cfg).unwrap();
}

#[test]
fn example_under_probability_ranking() {
    let s = table1_scenario();
    let cfg = SimConfig {
        policy: Policy::ProbabilityRanked,
        ..table1_config()
    };
    let r = replay(&s.log, &s.scores, &cfg).unwrap();
    // F (p = 0.51) passes the threshold and is treated once D and E are done,
    // despite its harmful effect: 20 * -1.2 - 1 = -25.
    assert_eq!(r.allocation_order, ["A", "B", "E", "D", "F"]);
    assert!((r.total_gain - (11.4 - 25.0)).abs() < 1e-9);
}

#[test]
fn random_runs_pass_audit() {
    let mut g = rng(2024);
    for i in 0..200 {
        let s = random_scenario(&mut g, 30, 6);
        let cfg = random_config(&mut g, 10);
        let (r, trace) = replay_traced(&s.log, &s.scores, &cfg).unwrap();
        if let Err(e) = audit(&r, &trace, &cfg) {
            panic!("run {i} ({cfg:?}): {e}");
        }
    }
}

#[test]
fn every_duration_kind_passes_audit() {
    let mut g = rng(5);
    for kind in DurationKind::ALL {
        for capacity in 0..=10 {
            let s = random_scenario(&mut g, 40, 5);
            let cfg = SimConfig {
                capacity,
                duration: DurationConfig {
                    kind,
                    lo: 1.0,
                    hi: 60.0,
                    ..DurationConfig::default()
                },
                ..random_config(&mut g, 0)
            };
            let (r, trace) = replay_traced(&s.log, &s.scores, &cfg).unwrap();
            audit(&r, &trace, &cfg).unwrap();
        }
    }
}

#[test]
fn matches_naive_oracle_on_micro_instances() {
    let mut g = rng(77);
    for i in 0..500 {
        let s = random_scenario(&mut g, 6, 3);
        let cfg = random_config(&mut g, 3);
        let r = replay(&s.log, &s.scores, &cfg).unwrap();
        let o = naive_replay(&s.log, &s.scores, &cfg);
        assert_eq!(r.allocation_order, o.allocation_order, "instance {i}");
        assert_eq!(r.total_gain, o.total_gain, "instance {i}");
    }
}

#[test]
fn matches_naive_oracle_on_larger_instances() {
    let mut g = rng(78);
    for i in 0..50 {
        let s = random_scenario(&mut g, 60, 8);
        let cfg = random_config(&mut g, 10);
        let r = replay(&s.log, &s.scores, &cfg).unwrap();
        let o = naive_replay(&s.log, &s.scores, &cfg);
        assert_eq!(r.allocation_order, o.allocation_order, "instance {i}");
        assert_eq!(r.total_gain, o.total_gain, "instance {i}");
    }
}

#[test]
fn replay_is_deterministic() {
    let mut g = rng(9);
    for _ in 0..20 {
        let s = random_scenario(&mut g, 30, 6);
        let cfg = random_config(&mut g, 5);
        let a = serde_json::to_string(&replay(&s.log, &s.scores, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&replay(&s.log, &s.scores, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn gain_ranking_avoids_harmful_cases() {
    let mut g = rng(3);
    for _ in 0..10 {
        let s = harmful_high_risk_scenario(&mut g);
        for capacity in 1..=10 {
            let base = SimConfig {
                capacity,
                ..table1_config()
            };
            let cfg = |policy| SimConfig { policy, duration: DurationConfig { fixed_value: 60.0, ..DurationConfig::default() }, ..base.clone() };
            let ours = replay(&s.log, &s.scores, &cfg(Policy::GainRanked)).unwrap();
            let theirs = replay(&s.log, &s.scores, &cfg(Policy::ProbabilityRanked)).unwrap();
            assert!(ours.per_case_records.iter().all(|r| r.gain_at_treatment.is_none_or(|g| g > 0.0)));
            assert!(ours.total_gain > theirs.total_gain, "capacity {capacity}");
        }
    }
}

#[test]
fn treatment_time_never_precedes_assessment() {
    let mut g = rng(11);
    for _ in 0..50 {
        let s = random_scenario(&mut g, 20, 5);
        let cfg = random_config(&mut g, 4);
        let (r, trace) = replay_traced(&s.log, &s.scores, &cfg).unwrap();
        for rec in r.per_case_records.iter().filter(|r| r.treated) {
            let upsert = trace
                .iter()
                .filter(|d| d.action == Action::Upsert && d.case_id.as_deref() == Some(rec.case_id.as_str()))
                .map(|d| d.instant)
                .min()
                .unwrap();
            assert!(rec.treatment_time.unwrap() >= upsert);
            assert!(rec.treatment_time.unwrap() - upsert >= Duration::zero());
        }
    }
}
