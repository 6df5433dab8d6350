//! Quadratic reference replay. Keeps a flat per-case state table and
//! re-scans every case for the best candidate at each allocation, with no
//! ordered queue or release heap.

use chrono::{DateTime, Duration, Utc};
use prpm_core::encoding::Prefix;
use prpm_core::gain;
use prpm_core::scores::CaseScorer;
use prpm_core::sim::{DurationSampler, Policy, SimConfig};
use prpm_core::EventLog;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub allocation_order: Vec<String>,
    pub total_gain: f64,
}

#[derive(Clone)]
struct Candidate {
    p_uout: f64,
    cate: f64,
    rank: f64,
    assessed_at: DateTime<Utc>,
}

#[derive(Clone, Default)]
struct CaseRow {
    candidate: Option<Candidate>,
    treated: bool,
    gain: Option<f64>,
}

/// `true` when `a` outranks `b` under (rank desc, assessed_at asc, case_id asc).
fn outranks(a: (&Candidate, &str), b: (&Candidate, &str)) -> bool {
    if a.0.rank != b.0.rank {
        return a.0.rank > b.0.rank;
    }
    if a.0.assessed_at != b.0.assessed_at {
        return a.0.assessed_at < b.0.assessed_at;
    }
    a.1 < b.1
}

struct State<'a> {
    log: &'a EventLog,
    cfg: &'a SimConfig,
    rows: Vec<CaseRow>,
    busy: Vec<Option<DateTime<Utc>>>,
    sampler: DurationSampler,
    order: Vec<String>,
}

impl State<'_> {
    fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let Some(c) = &row.candidate else { continue };
            let id = self.log.traces[i].case_id.as_str();
            best = match best {
                Some(j) => {
                    let cj = self.rows[j].candidate.as_ref().unwrap();
                    let idj = self.log.traces[j].case_id.as_str();
                    if outranks((c, id), (cj, idj)) {
                        Some(i)
                    } else {
                        Some(j)
                    }
                }
                None => Some(i),
            };
        }
        best
    }

    fn allocate(&mut self, now: DateTime<Utc>) {
        loop {
            let Some(slot) = (0..self.busy.len()).find(|&r| self.busy[r].is_none()) else {
                return;
            };
            let Some(i) = self.best() else { return };
            let c = self.rows[i].candidate.clone().unwrap();
            if self.cfg.policy == Policy::GainRanked && c.rank <= 0.0 {
                return;
            }
            let secs = self.sampler.sample();
            self.busy[slot] = Some(now + Duration::nanoseconds((secs * 1e9).round() as i64));
            let row = &mut self.rows[i];
            row.candidate = None;
            row.treated = true;
            row.gain = Some(gain::gain(c.p_uout, c.cate, &self.cfg.params).unwrap());
            self.order.push(self.log.traces[i].case_id.clone());
        }
    }

    fn release_due(&mut self, t: DateTime<Utc>) {
        loop {
            let mut next: Option<(DateTime<Utc>, usize)> = None;
            for (r, b) in self.busy.iter().enumerate() {
                if let Some(until) = b {
                    if *until <= t && next.is_none_or(|(u, _)| *until < u) {
                        next = Some((*until, r));
                    }
                }
            }
            let Some((until, r)) = next else { return };
            self.busy[r] = None;
            self.allocate(until);
        }
    }
}

pub fn naive_replay(log: &EventLog, scorer: &dyn CaseScorer, cfg: &SimConfig) -> OracleOutcome {
    let mut events = Vec::new();
    for (ti, t) in log.traces.iter().enumerate() {
        for (k, e) in t.events.iter().enumerate() {
            events.push((e.timestamp, ti, k));
        }
    }
    events.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| log.traces[a.1].case_id.cmp(&log.traces[b.1].case_id))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut st = State {
        log,
        cfg,
        rows: vec![CaseRow::default(); log.len()],
        busy: vec![None; cfg.capacity],
        sampler: DurationSampler::new(cfg.duration.clone(), cfg.seed).unwrap(),
        order: Vec::new(),
    };
    let cap = scorer.max_prefix_len();
    let params = &cfg.params;
    for (ts, ti, k) in events {
        st.release_due(ts);
        if st.rows[ti].treated {
            continue;
        }
        let trace = &log.traces[ti];
        if k + 1 == trace.len() {
            st.rows[ti].candidate = None;
            continue;
        }
        if cap.is_some_and(|c| k + 1 > c) {
            continue;
        }
        let Some(s) = scorer.score(&Prefix::new(trace, k + 1).unwrap()).unwrap() else {
            continue;
        };
        let admitted = match cfg.policy {
            Policy::GainRanked => s.p_uout > params.tau && s.cate > 0.0,
            Policy::ProbabilityRanked => s.p_uout > params.tau,
        };
        st.rows[ti].candidate = admitted.then(|| Candidate {
            p_uout: s.p_uout,
            cate: s.cate,
            rank: match cfg.policy {
                Policy::GainRanked => gain::gain(s.p_uout, s.cate, params).unwrap(),
                Policy::ProbabilityRanked => s.p_uout,
            },
            assessed_at: ts,
        });
        st.allocate(ts);
    }
    OracleOutcome {
        total_gain: st.rows.iter().filter_map(|r| r.gain).sum(),
        allocation_order: st.order,
    }
}
