//! Hand-built logs with precomputed score tables.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use prpm_core::eventlog::{Event, LogSchema};
use prpm_core::sim::{DurationConfig, DurationKind};
use prpm_core::{CostParams, EventLog, Outcome, Policy, Score, ScoreTable, SimConfig, Trace, Treatment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn epoch() -> DateTime<Utc> {
    "2021-01-01T00:00:00Z".parse().unwrap()
}

/// A log together with the scores of every non-final prefix.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub log: EventLog,
    pub scores: ScoreTable,
}

/// Builds a trace whose events happen at the given offsets (seconds from
/// [`epoch`]).
pub fn trace_at(case_id: &str, offsets: &[i64]) -> Trace {
    let events = offsets
        .iter()
        .enumerate()
        .map(|(i, s)| Event {
            case_id: case_id.to_string(),
            activity: format!("step_{i}"),
            timestamp: epoch() + Duration::seconds(*s),
            resource: None,
            attrs: BTreeMap::new(),
        })
        .collect();
    Trace {
        case_id: case_id.to_string(),
        case_attrs: BTreeMap::new(),
        events,
        outcome: Outcome::Unlabeled,
        treatment: Treatment::Unlabeled,
    }
}

pub fn log_of(traces: Vec<Trace>) -> EventLog {
    EventLog::new(traces, LogSchema::default())
}

/// The six-case cost example: `(case, p_uout, cate)`.
pub const TABLE1: [(&str, f64, f64); 6] = [
    ("A", 0.55, 0.3),
    ("B", 0.64, 0.12),
    ("C", 0.4, 0.5),
    ("D", 0.8, 0.13),
    ("E", 0.9, 0.22),
    ("F", 0.51, -1.2),
];

pub fn table1_params() -> CostParams {
    CostParams::new(20.0, 1.0, 0.5).unwrap()
}

/// Cases A..F arrive ten seconds apart and stay open for hours; each is
/// assessed once, on its first event.
pub fn table1_scenario() -> Scenario {
    let mut traces = Vec::new();
    let mut scores = ScoreTable::new();
    for (i, (id, p, cate)) in TABLE1.iter().enumerate() {
        traces.push(trace_at(id, &[10 * i as i64, 10_000]));
        scores.insert(id, 1, Score { p_uout: *p, cate: *cate });
    }
    Scenario {
        log: log_of(traces),
        scores,
    }
}

/// Two resources, each blocked for ten minutes per treatment.
pub fn table1_config() -> SimConfig {
    SimConfig {
        params: table1_params(),
        capacity: 2,
        duration: DurationConfig {
            fixed_value: 600.0,
            ..DurationConfig::default()
        },
        policy: Policy::GainRanked,
        seed: 0,
    }
}

/// Draws values from a coarse grid so ties in rank and time are common.
fn coarse(rng: &mut impl Rng, lo: f64, hi: f64, steps: u32) -> f64 {
    lo + (hi - lo) * rng.random_range(0..=steps) as f64 / steps as f64
}

/// Random instance with up to `max_cases` cases of 1..=`max_events` events.
/// Timestamps and scores are drawn from coarse grids so that ties occur.
pub fn random_scenario(rng: &mut impl Rng, max_cases: usize, max_events: usize) -> Scenario {
    let n = rng.random_range(1..=max_cases);
    let horizon = 4 * max_cases as i64 * max_events as i64;
    let mut traces = Vec::new();
    let mut scores = ScoreTable::new();
    for c in 0..n {
        let id = format!("c{c:03}");
        let len = rng.random_range(1..=max_events);
        let mut offsets: Vec<i64> = (0..len).map(|_| rng.random_range(0..horizon)).collect();
        offsets.sort_unstable();
        for k in 1..len {
            // Occasionally leave a prefix unscored.
            if rng.random_bool(0.1) {
                continue;
            }
            let score = Score {
                p_uout: coarse(rng, 0.0, 1.0, 20),
                cate: coarse(rng, -0.3, 0.5, 16),
            };
            scores.insert(&id, k, score);
        }
        traces.push(trace_at(&id, &offsets));
    }
    Scenario {
        log: log_of(traces),
        scores,
    }
}

pub fn random_config(rng: &mut impl Rng, max_capacity: usize) -> SimConfig {
    let kind = DurationKind::ALL[rng.random_range(0..3)];
    let duration = DurationConfig {
        kind,
        fixed_value: rng.random_range(1..=30) as f64,
        lo: 1.0,
        hi: 30.0,
        normal_mean: 10.0,
        normal_sd: 8.0,
        exp_mean: 10.0,
    };
    SimConfig {
        params: CostParams::new(
            [1.0, 2.0, 5.0, 20.0][rng.random_range(0..4)],
            1.0,
            coarse(rng, 0.0, 0.9, 9),
        )
        .unwrap(),
        capacity: rng.random_range(0..=max_capacity),
        duration,
        policy: Policy::ALL[rng.random_range(0..2)],
        seed: rng.random(),
    }
}

/// Forty cases arriving ten seconds apart. Roughly 30% are high-risk cases
/// for which the intervention backfires (negative effect); the rest are
/// moderately risky and respond positively.
pub fn harmful_high_risk_scenario(rng: &mut impl Rng) -> Scenario {
    let mut traces = Vec::new();
    let mut scores = ScoreTable::new();
    for c in 0..40 {
        let id = format!("h{c:03}");
        let start = 10 * c as i64;
        traces.push(trace_at(&id, &[start, start + 5_000]));
        let score = if rng.random_bool(0.3) {
            Score {
                p_uout: rng.random_range(0.85..0.99),
                cate: rng.random_range(-0.3..-0.05),
            }
        } else {
            Score {
                p_uout: rng.random_range(0.55..0.8),
                cate: rng.random_range(0.05..0.4),
            }
        };
        scores.insert(&id, 1, score);
    }
    Scenario {
        log: log_of(traces),
        scores,
    }
}
