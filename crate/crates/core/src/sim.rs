//! Event-stream replay with a bounded pool of intervention resources.
//!
//! Events of all test traces are merged into one stream ordered by
//! `(timestamp, case_id, position in trace)`. Every event of a running,
//! untreated case refreshes that case's assessment and its place in the
//! candidate queue; the last event of a case completes it and removes it from
//! the queue. Whenever the queue changes, and whenever a resource is
//! released, free resources are handed to the head of the queue, each one
//! blocked for a sampled treatment duration. Releases due at or before an
//! event's timestamp are processed before the event.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::io::Write;

use chrono::{DateTime, Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::Prefix;
use crate::eventlog::{format_timestamp, EventLog};
use crate::gain::{self, CostParams, GainAssessment, GainError};
use crate::scores::{CaseScorer, ScoreError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid duration sampler: {0}")]
    Duration(String),
    #[error("case `{0}` appears twice in the test log")]
    DuplicateCase(String),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationKind {
    Fixed,
    TruncatedNormal,
    TruncatedExponential,
}

impl DurationKind {
    pub const ALL: [DurationKind; 3] = [
        DurationKind::Fixed,
        DurationKind::TruncatedNormal,
        DurationKind::TruncatedExponential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DurationKind::Fixed => "fixed",
            DurationKind::TruncatedNormal => "truncated_normal",
            DurationKind::TruncatedExponential => "truncated_exponential",
        }
    }
}

/// Treatment-duration distribution, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DurationConfig {
    pub kind: DurationKind,
    pub fixed_value: f64,
    pub lo: f64,
    pub hi: f64,
    pub normal_mean: f64,
    pub normal_sd: f64,
    pub exp_mean: f64,
}

impl Default for DurationConfig {
    fn default() -> Self {
        Self {
            kind: DurationKind::Fixed,
            fixed_value: 60.0,
            lo: 1.0,
            hi: 60.0,
            normal_mean: 30.5,
            normal_sd: 15.0,
            exp_mean: 30.5,
        }
    }
}

impl DurationConfig {
    pub fn with_kind(kind: DurationKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Probability that one draw of the untruncated distribution lands in
    /// `[lo, hi]`.
    pub fn acceptance_probability(&self) -> f64 {
        match self.kind {
            DurationKind::Fixed => 1.0,
            DurationKind::TruncatedNormal => {
                let phi = |x: f64| {
                    0.5 * statrs::function::erf::erfc(
                        -(x - self.normal_mean) / (self.normal_sd * std::f64::consts::SQRT_2),
                    )
                };
                phi(self.hi) - phi(self.lo)
            }
            DurationKind::TruncatedExponential => {
                let lo = self.lo.max(0.0);
                let hi = self.hi.max(0.0);
                (-lo / self.exp_mean).exp() - (-hi / self.exp_mean).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Duration(m));
        match self.kind {
            DurationKind::Fixed => {
                if !(self.fixed_value.is_finite() && self.fixed_value > 0.0) {
                    return bad(format!("fixed_value {} must be > 0", self.fixed_value));
                }
                return Ok(());
            }
            DurationKind::TruncatedNormal => {
                if !(self.normal_mean.is_finite() && self.normal_sd.is_finite() && self.normal_sd > 0.0) {
                    return bad("normal_sd must be > 0 and parameters finite".into());
                }
            }
            DurationKind::TruncatedExponential => {
                if !(self.exp_mean.is_finite() && self.exp_mean > 0.0) {
                    return bad(format!("exp_mean {} must be > 0", self.exp_mean));
                }
            }
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.lo <= self.hi) {
            return bad(format!("bounds [{}, {}] must satisfy 0 < lo <= hi", self.lo, self.hi));
        }
        let p = self.acceptance_probability();
        if !(p >= 1e-6) {
            return bad(format!("acceptance probability {p:e} below 1e-6"));
        }
        Ok(())
    }
}

/// Seeded treatment-duration source. Truncated kinds redraw until the
/// sample falls inside `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct DurationSampler {
    config: DurationConfig,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
    exp: Option<Exp<f64>>,
}

impl DurationSampler {
    pub fn new(config: DurationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let normal = match config.kind {
            DurationKind::TruncatedNormal => Some(
                Normal::new(config.normal_mean, config.normal_sd)
                    .map_err(|e| SimError::Duration(e.to_string()))?,
            ),
            _ => None,
        };
        let exp = match config.kind {
            DurationKind::TruncatedExponential => Some(
                Exp::new(1.0 / config.exp_mean).map_err(|e| SimError::Duration(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
            exp,
        })
    }

    pub fn config(&self) -> &DurationConfig {
        &self.config
    }

    /// Next duration in seconds.
    pub fn sample(&mut self) -> f64 {
        let (lo, hi) = (self.config.lo, self.config.hi);
        loop {
            let s = match self.config.kind {
                DurationKind::Fixed => return self.config.fixed_value,
                DurationKind::TruncatedNormal => self.normal.unwrap().sample(&mut self.rng),
                DurationKind::TruncatedExponential => self.exp.unwrap().sample(&mut self.rng),
            };
            if (lo..=hi).contains(&s) {
                return s;
            }
        }
    }
}

fn seconds(s: f64) -> Duration {
    Duration::nanoseconds((s * 1e9).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Treat the eligible case with the largest gain, if that gain is
    /// positive.
    GainRanked,
    /// Treat the case with the largest `P_uout` above the threshold.
    ProbabilityRanked,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::GainRanked, Policy::ProbabilityRanked];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::GainRanked => "gain_ranked",
            Policy::ProbabilityRanked => "probability_ranked",
        }
    }

    /// Whether an assessment may enter the candidate queue.
    pub fn admits(self, a: &GainAssessment, params: &CostParams) -> bool {
        match self {
            Policy::GainRanked => a.eligible,
            Policy::ProbabilityRanked => a.p_uout > params.tau,
        }
    }

    /// Ranking value, larger first.
    pub fn rank(self, a: &GainAssessment) -> f64 {
        match self {
            Policy::GainRanked => a.gain.unwrap_or(f64::NEG_INFINITY),
            Policy::ProbabilityRanked => a.p_uout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: CostParams,
    pub capacity: usize,
    pub duration: DurationConfig,
    pub policy: Policy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct QueueKey {
    rank: f64,
    assessed_at: DateTime<Utc>,
    case_id: String,
}

impl Eq for QueueKey {}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .rank
            .total_cmp(&self.rank)
            .then_with(|| self.assessed_at.cmp(&other.assessed_at))
            .then_with(|| self.case_id.cmp(&other.case_id))
    }
}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Candidate cases ordered by (rank descending, assessed_at, case_id); at
/// most one entry per case.
#[derive(Debug, Default)]
pub struct CandidateQueue {
    order: BTreeSet<QueueKey>,
    entries: HashMap<String, (QueueKey, GainAssessment)>,
}

impl CandidateQueue {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, case_id: &str) -> bool {
        self.entries.contains_key(case_id)
    }

    pub fn upsert(&mut self, rank: f64, assessment: GainAssessment) {
        self.remove(&assessment.case_id);
        let key = QueueKey {
            rank,
            assessed_at: assessment.assessed_at,
            case_id: assessment.case_id.clone(),
        };
        self.order.insert(key.clone());
        self.entries.insert(assessment.case_id.clone(), (key, assessment));
    }

    pub fn remove(&mut self, case_id: &str) -> Option<GainAssessment> {
        let (key, a) = self.entries.remove(case_id)?;
        self.order.remove(&key);
        Some(a)
    }

    pub fn head(&self) -> Option<(f64, &GainAssessment)> {
        let key = self.order.first()?;
        Some((key.rank, &self.entries[&key.case_id].1))
    }

    pub fn pop(&mut self) -> Option<GainAssessment> {
        let key = self.order.pop_first()?;
        self.entries.remove(&key.case_id).map(|(_, a)| a)
    }

    /// Short digest of the queue contents in order.
    pub fn snapshot_hash(&self) -> String {
        let mut h = Sha256::new();
        for k in &self.order {
            h.update(k.case_id.as_bytes());
            h.update(k.rank.to_bits().to_le_bytes());
            h.update([0]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Case entered the queue or had its entry refreshed.
    Upsert,
    /// Case left the queue without treatment.
    Remove,
    Allocate,
    Release,
}

impl Action {
    fn as_str(self) -> &'static str {
        match self {
            Action::Upsert => "upsert",
            Action::Remove => "remove",
            Action::Allocate => "allocate",
            Action::Release => "release",
        }
    }
}

/// One row of the decision trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub seq: usize,
    pub instant: DateTime<Utc>,
    pub action: Action,
    pub case_id: Option<String>,
    pub resource: Option<usize>,
    /// Ranking value of the case under the policy (upsert, allocate).
    pub rank: Option<f64>,
    pub p_uout: Option<f64>,
    pub cate: Option<f64>,
    /// Resources blocked after the action.
    pub busy: usize,
    pub queue_len: usize,
    pub queue_hash: String,
}

pub fn write_decision_trace<W: Write>(records: &[DecisionRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seq", "instant", "action", "case_id", "resource", "rank", "busy", "queue_len", "queue_hash",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in records {
        w.write_record([
            r.seq.to_string(),
            format_timestamp(&r.instant),
            r.action.as_str().to_string(),
            opt(r.case_id.clone()),
            opt(r.resource.map(|x| x.to_string())),
            opt(r.rank.map(|x| x.to_string())),
            r.busy.to_string(),
            r.queue_len.to_string(),
            r.queue_hash.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub treated: bool,
    pub treatment_time: Option<DateTime<Utc>>,
    pub gain_at_treatment: Option<f64>,
    /// At treatment if treated, otherwise from the last assessment.
    pub p_uout: Option<f64>,
    pub cate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub policy: Policy,
    pub total_gain: f64,
    pub treated_cases: usize,
    pub treated_fraction: f64,
    /// Cases that entered the candidate queue at least once.
    pub candidate_cases: usize,
    pub total_cases: usize,
    /// Sum of `CATE_1` over treated cases.
    pub cate_sum: f64,
    /// Treated cases in allocation order.
    pub allocation_order: Vec<String>,
    pub per_case_records: Vec<CaseRecord>,
    pub config: SimConfig,
    pub seed: u64,
}

#[derive(Default)]
struct CaseState {
    last: Option<GainAssessment>,
    treated_at: Option<DateTime<Utc>>,
    realized_gain: Option<f64>,
    was_candidate: bool,
}

struct Replay<'a> {
    cfg: &'a SimConfig,
    sampler: DurationSampler,
    queue: CandidateQueue,
    /// `busy_until` per resource; `None` when free.
    pool: Vec<Option<DateTime<Utc>>>,
    releases: BinaryHeap<Reverse<(DateTime<Utc>, usize)>>,
    states: Vec<CaseState>,
    index: HashMap<&'a str, usize>,
    allocation_order: Vec<String>,
    trace: Option<Vec<DecisionRecord>>,
}

impl<'a> Replay<'a> {
    fn busy(&self) -> usize {
        self.pool.iter().filter(|b| b.is_some()).count()
    }

    fn record(&mut self, instant: DateTime<Utc>, action: Action, case_id: Option<&str>, resource: Option<usize>, a: Option<&GainAssessment>) {
        let Some(trace) = self.trace.as_ref() else {
            return;
        };
        let rec = DecisionRecord {
            seq: trace.len(),
            instant,
            action,
            case_id: case_id.map(str::to_string),
            resource,
            rank: a.filter(|_| matches!(action, Action::Upsert | Action::Allocate))
                .map(|a| self.cfg.policy.rank(a)),
            p_uout: a.map(|a| a.p_uout),
            cate: a.map(|a| a.cate),
            busy: self.busy(),
            queue_len: self.queue.len(),
            queue_hash: self.queue.snapshot_hash(),
        };
        self.trace.as_mut().unwrap().push(rec);
    }

    fn release_until(&mut self, t: DateTime<Utc>) -> Result<()> {
        while let Some(Reverse((until, r))) = self.releases.peek().copied() {
            if until > t {
                break;
            }
            self.releases.pop();
            self.pool[r] = None;
            self.record(until, Action::Release, None, Some(r), None);
            self.allocate(until)?;
        }
        Ok(())
    }

    fn allocate(&mut self, now: DateTime<Utc>) -> Result<()> {
        while let Some(r) = self.pool.iter().position(Option::is_none) {
            let Some((rank, _)) = self.queue.head() else {
                break;
            };
            if self.cfg.policy == Policy::GainRanked && !(rank > 0.0) {
                break;
            }
            let a = self.queue.pop().expect("head exists");
            let until = now + seconds(self.sampler.sample());
            debug_assert!(until > now);
            self.pool[r] = Some(until);
            self.releases.push(Reverse((until, r)));
            let realized = gain::gain(a.p_uout, a.cate, &self.cfg.params)?;
            let i = self.index[a.case_id.as_str()];
            let state = &mut self.states[i];
            state.treated_at = Some(now);
            state.realized_gain = Some(realized);
            state.last = Some(a.clone());
            self.allocation_order.push(a.case_id.clone());
            self.record(now, Action::Allocate, Some(&a.case_id), Some(r), Some(&a));
        }
        Ok(())
    }
}

fn run(log: &EventLog, scorer: &dyn CaseScorer, cfg: &SimConfig, traced: bool) -> Result<(SimulationResult, Option<Vec<DecisionRecord>>)> {
    cfg.params.validate()?;
    let sampler = DurationSampler::new(cfg.duration.clone(), cfg.seed)?;
    let mut index = HashMap::new();
    for (i, t) in log.traces.iter().enumerate() {
        if index.insert(t.case_id.as_str(), i).is_some() {
            return Err(SimError::DuplicateCase(t.case_id.clone()));
        }
    }
    let mut stream: Vec<(DateTime<Utc>, &str, usize, usize)> = log
        .traces
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| t.events.iter().enumerate().map(move |(k, e)| (e.timestamp, t.case_id.as_str(), k, ti)))
        .collect();
    stream.sort_unstable();

    let cap = scorer.max_prefix_len();
    let mut sim = Replay {
        cfg,
        sampler,
        queue: CandidateQueue::default(),
        pool: vec![None; cfg.capacity],
        releases: BinaryHeap::new(),
        states: log.traces.iter().map(|_| CaseState::default()).collect(),
        index,
        allocation_order: Vec::new(),
        trace: traced.then(Vec::new),
    };

    for (ts, case_id, k, ti) in stream {
        sim.release_until(ts)?;
        let trace = &log.traces[ti];
        if sim.states[ti].treated_at.is_some() {
            continue;
        }
        if k + 1 == trace.len() {
            if let Some(a) = sim.queue.remove(case_id) {
                sim.record(ts, Action::Remove, Some(case_id), None, Some(&a));
            }
            continue;
        }
        let len = k + 1;
        if cap.is_some_and(|c| len > c) {
            continue;
        }
        let prefix = Prefix::new(trace, len).expect("event index within trace");
        let Some(score) = scorer.score(&prefix)? else {
            continue;
        };
        let a = gain::assess(case_id, score.p_uout, score.cate, &cfg.params, ts)?;
        sim.states[ti].last = Some(a.clone());
        if cfg.policy.admits(&a, &cfg.params) {
            sim.states[ti].was_candidate = true;
            sim.queue.upsert(cfg.policy.rank(&a), a.clone());
            sim.record(ts, Action::Upsert, Some(case_id), None, Some(&a));
        } else if sim.queue.remove(case_id).is_some() {
            sim.record(ts, Action::Remove, Some(case_id), None, Some(&a));
        }
        sim.allocate(ts)?;
    }

    let per_case_records: Vec<CaseRecord> = log
        .traces
        .iter()
        .zip(&sim.states)
        .map(|(t, s)| CaseRecord {
            case_id: t.case_id.clone(),
            treated: s.treated_at.is_some(),
            treatment_time: s.treated_at,
            gain_at_treatment: s.realized_gain,
            p_uout: s.last.as_ref().map(|a| a.p_uout),
            cate: s.last.as_ref().map(|a| a.cate),
        })
        .collect();
    // Folding from +0.0 keeps an empty total from printing as -0.
    let total_gain = per_case_records
        .iter()
        .filter_map(|r| r.gain_at_treatment)
        .fold(0.0, |a, b| a + b);
    let cate_sum = per_case_records
        .iter()
        .filter(|r| r.treated)
        .filter_map(|r| r.cate)
        .fold(0.0, |a, b| a + b);
    let treated_cases = sim.allocation_order.len();
    let total_cases = log.len();
    let result = SimulationResult {
        policy: cfg.policy,
        total_gain,
        treated_cases,
        treated_fraction: if total_cases == 0 {
            0.0
        } else {
            treated_cases as f64 / total_cases as f64
        },
        candidate_cases: sim.states.iter().filter(|s| s.was_candidate).count(),
        total_cases,
        cate_sum,
        allocation_order: sim.allocation_order,
        per_case_records,
        config: cfg.clone(),
        seed: cfg.seed,
    };
    Ok((result, sim.trace))
}

/// Replays `log` under `cfg`.
pub fn replay(log: &EventLog, scorer: &dyn CaseScorer, cfg: &SimConfig) -> Result<SimulationResult> {
    run(log, scorer, cfg, false).map(|(r, _)| r)
}

/// Like [`replay`], also returning the decision trace.
pub fn replay_traced(
    log: &EventLog,
    scorer: &dyn CaseScorer,
    cfg: &SimConfig,
) -> Result<(SimulationResult, Vec<DecisionRecord>)> {
    run(log, scorer, cfg, true).map(|(r, t)| (r, t.expect("traced run")))
}

/// Runs the gain-ranked policy and the probability-ranked baseline on the
/// same stream with identically seeded duration draws.
pub fn compare_policies(
    log: &EventLog,
    scorer: &dyn CaseScorer,
    cfg: &SimConfig,
) -> Result<(SimulationResult, SimulationResult)> {
    let with = |policy| SimConfig {
        policy,
        ..cfg.clone()
    };
    Ok((
        replay(log, scorer, &with(Policy::GainRanked))?,
        replay(log, scorer, &with(Policy::ProbabilityRanked))?,
    ))
}
