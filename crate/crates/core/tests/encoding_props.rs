use prpm_core::encoding::{extract_prefixes, fit_schema, nearest_rank, prefix_length_cap, Prefix};
use prpm_core::synth::{generate, SynthConfig};
use prpm_core::{EncodingSchema, EventLog};
use proptest::prelude::*;

fn synth_log(seed: u64, n: usize) -> EventLog {
    let cfg = SynthConfig {
        n_cases: n,
        seed,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap().0
}

fn schema_for(log: &EventLog) -> EncodingSchema {
    let cap = prefix_length_cap(log, 0.9).unwrap();
    fit_schema(&extract_prefixes(log, cap), cap, Some("O_Create Offer")).unwrap()
}

fn column(schema: &EncodingSchema, name: &str) -> usize {
    schema.feature_index(name).unwrap_or_else(|| panic!("no feature {name}"))
}

#[test]
fn prefixes_respect_the_cap() {
    let log = synth_log(1, 300);
    let cap = prefix_length_cap(&log, 0.9).unwrap();
    let mut lengths: Vec<usize> = log.traces.iter().map(|t| t.len()).collect();
    lengths.sort_unstable();
    // Smallest length covering at least 90% of traces.
    let oracle = *lengths.iter().find(|&&l| lengths.iter().filter(|&&x| x <= l).count() * 10 >= lengths.len() * 9).unwrap();
    assert_eq!(cap, oracle);
    let prefixes = extract_prefixes(&log, cap);
    let expected: usize = log.traces.iter().map(|t| t.len().min(cap)).sum();
    assert_eq!(prefixes.len(), expected);
    assert!(prefixes.iter().all(|p| p.len() <= cap));
}

#[test]
fn aggregates_are_monotone_along_a_trace() {
    let log = synth_log(2, 200);
    let schema = schema_for(&log);
    let (n_col, o_col, t_col) = (column(&schema, "event_number"), column(&schema, "offer_count"), column(&schema, "sum_time"));
    let count_cols: Vec<usize> = schema
        .feature_names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("activity_") || n.starts_with("res_"))
        .map(|(i, _)| i)
        .collect();
    for trace in &log.traces {
        let vs: Vec<Vec<f64>> = (1..=trace.len())
            .map(|k| schema.encode(&Prefix::new(trace, k).unwrap()).0)
            .collect();
        assert_eq!(vs[0][t_col], 0.0);
        for (k, v) in vs.iter().enumerate() {
            assert_eq!(v.len(), schema.width());
            assert_eq!(v[n_col], (k + 1) as f64);
            let counted: f64 = count_cols.iter().filter(|&&c| schema.feature_names[c].starts_with("activity_")).map(|&c| v[c]).sum();
            assert_eq!(counted, (k + 1) as f64);
        }
        for w in vs.windows(2) {
            assert!(w[0][o_col] <= w[1][o_col]);
            assert!(w[0][t_col] <= w[1][t_col]);
            assert!(count_cols.iter().all(|&c| w[0][c] <= w[1][c]));
        }
    }
}

#[test]
fn unseen_values_encode_to_zero() {
    let log = synth_log(3, 100);
    let schema = schema_for(&log);
    let mut trace = log.traces[0].clone();
    trace.case_attrs.insert("loan_goal".into(), prpm_core::eventlog::AttrValue::Categorical("boat".into()));
    trace.events[0].activity = "Never seen".into();
    trace.events[0].resource = Some("Nobody".into());
    let v = schema.encode(&Prefix::new(&trace, 1).unwrap());
    for (i, name) in schema.feature_names.iter().enumerate() {
        if name.starts_with("loan_goal_") || name.starts_with("activity_") || name.starts_with("res_") {
            assert_eq!(v.0[i], 0.0, "{name}");
        }
    }
}

#[test]
fn fitting_is_deterministic_and_serializable() {
    let log = synth_log(4, 150);
    let a = schema_for(&log);
    let b = schema_for(&log);
    assert_eq!(a.fingerprint(), b.fingerprint());
    let back = EncodingSchema::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.fingerprint(), a.fingerprint());
    for p in extract_prefixes(&log, a.max_prefix_len).iter().take(200) {
        assert_eq!(a.encode(p), back.encode(p));
    }
    let mut names = a.feature_names.clone();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), a.width());
}

#[test]
fn changed_vocabulary_changes_fingerprint() {
    let a = schema_for(&synth_log(5, 100));
    let mut b = a.clone();
    b.feature_names.push("extra".into());
    assert_ne!(a.fingerprint(), b.fingerprint());
}

proptest! {
    #[test]
    fn nearest_rank_matches_definition(mut lengths in prop::collection::vec(1usize..50, 1..200), pct in 1u32..=100) {
        let p = pct as f64 / 100.0;
        let got = nearest_rank(&lengths, p).unwrap();
        lengths.sort_unstable();
        let n = lengths.len();
        // Smallest rank r with r / n >= p, in exact integer arithmetic.
        let r = (1..=n).find(|r| (*r as u64) * 100 >= (pct as u64) * n as u64).unwrap();
        prop_assert_eq!(got, lengths[r - 1]);
    }
}
