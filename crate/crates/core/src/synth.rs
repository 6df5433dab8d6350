//! Synthetic loan-application logs with planted ground truth.
//!
//! Each case carries three case attributes (`loan_goal`, `channel`,
//! `amount`). The probability of the undesired outcome without treatment is
//! logistic in those attributes; treatment lowers it by a known effect. The
//! treatment itself shows up in the log the way the labeling rules read it:
//! a treated case gets exactly one offer event, an untreated case two or
//! three. The outcome shows up as the end activity.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{
    AttrKind, AttrValue, Event, EventLog, LabelingRules, LogSchema, Outcome, Trace, Treatment,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

pub const LOAN_GOALS: [&str; 4] = ["business", "car", "home", "other"];
const GOAL_COEF: [f64; 4] = [0.4, -1.0, -0.3, 0.9];
pub const CHANNELS: [&str; 2] = ["branch", "online"];
const CHANNEL_COEF: [f64; 2] = [-0.5, 0.5];
pub const AMOUNTS: [f64; 5] = [10_000.0, 20_000.0, 30_000.0, 40_000.0, 50_000.0];
const AMOUNT_COEF_PER_STEP: f64 = 0.5;

const FIRST_ACTIVITY: &str = "A_Create Application";
const MIDDLE_ACTIVITIES: [&str; 6] = [
    "A_Submitted",
    "W_Handle leads",
    "W_Complete application",
    "A_Concept",
    "W_Validate application",
    "W_Call incomplete files",
];
const RESOURCES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub start: DateTime<Utc>,
    /// Mean gap between case arrivals (Poisson arrivals), seconds.
    pub mean_interarrival_secs: f64,
    /// Mean gap between consecutive events of a case, seconds.
    pub mean_event_gap_secs: f64,
    pub min_middle_events: usize,
    pub max_middle_events: usize,
    /// Expected fraction of cases ending in the undesired outcome.
    pub undesired_rate: f64,
    /// Multiplier on the planted attribute coefficients; larger values make
    /// the outcome more predictable.
    pub logit_scale: f64,
    pub treatment_prob: f64,
    /// Reduction in undesired-outcome probability caused by treatment.
    pub effect: f64,
    /// Added to the effect for online cases and subtracted for branch cases.
    pub effect_channel_slope: f64,
    pub offer_activity: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cases: 1000,
            seed: 7,
            start: "2016-01-04T08:00:00Z".parse().expect("valid timestamp"),
            mean_interarrival_secs: 6.0,
            mean_event_gap_secs: 30.0,
            min_middle_events: 1,
            max_middle_events: 5,
            undesired_rate: 0.5,
            logit_scale: 1.0,
            treatment_prob: 0.5,
            effect: 0.2,
            effect_channel_slope: 0.0,
            offer_activity: LabelingRules::loan_application().offer_activity,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_cases == 0 {
            return bad("n_cases must be >= 1");
        }
        if !(self.mean_interarrival_secs > 0.0 && self.mean_event_gap_secs > 0.0) {
            return bad("mean gaps must be > 0");
        }
        if self.min_middle_events > self.max_middle_events {
            return bad("min_middle_events > max_middle_events");
        }
        if !(self.undesired_rate > 0.0 && self.undesired_rate < 1.0) {
            return bad("undesired_rate must be in (0, 1)");
        }
        if !(self.treatment_prob > 0.0 && self.treatment_prob < 1.0) {
            return bad("treatment_prob must be in (0, 1)");
        }
        if !self.logit_scale.is_finite() || self.logit_scale < 0.0 {
            return bad("logit_scale must be >= 0");
        }
        if self.effect.abs() + self.effect_channel_slope.abs() > 1.0 {
            return bad("|effect| + |effect_channel_slope| must be <= 1");
        }
        if self.offer_activity.is_empty() {
            return bad("offer_activity must be non-empty");
        }
        Ok(())
    }

    /// Labeling rules matching the activities this generator emits.
    pub fn labeling_rules(&self) -> LabelingRules {
        LabelingRules {
            offer_activity: self.offer_activity.clone(),
            ..LabelingRules::loan_application()
        }
    }
}

/// Planted truth, written next to the generated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub intercept: f64,
    pub goal_coefficients: BTreeMap<String, f64>,
    pub channel_coefficients: BTreeMap<String, f64>,
    pub amount_coefficient_per_step: f64,
    /// Exact expectation over the attribute distribution.
    pub expected_undesired_rate: f64,
    /// Mean of the true effect after clipping probabilities to [0, 1].
    pub expected_effect: f64,
    pub empirical_undesired_rate: f64,
    pub empirical_treated_fraction: f64,
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    goal: usize,
    channel: usize,
    amount: usize,
}

impl Profile {
    fn all() -> impl Iterator<Item = Profile> {
        (0..LOAN_GOALS.len()).flat_map(|goal| {
            (0..CHANNELS.len()).flat_map(move |channel| {
                (0..AMOUNTS.len()).map(move |amount| Profile {
                    goal,
                    channel,
                    amount,
                })
            })
        })
    }

    fn signal(&self) -> f64 {
        GOAL_COEF[self.goal]
            + CHANNEL_COEF[self.channel]
            + AMOUNT_COEF_PER_STEP * (self.amount as f64 - 2.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Truth<'a> {
    cfg: &'a SynthConfig,
    intercept: f64,
}

impl Truth<'_> {
    fn p_untreated(&self, p: Profile) -> f64 {
        sigmoid(self.intercept + self.cfg.logit_scale * p.signal())
    }

    fn effect(&self, p: Profile) -> f64 {
        let sign = if CHANNELS[p.channel] == "online" { 1.0 } else { -1.0 };
        self.cfg.effect + sign * self.cfg.effect_channel_slope
    }

    fn p_treated(&self, p: Profile) -> f64 {
        (self.p_untreated(p) - self.effect(p)).clamp(0.0, 1.0)
    }

    /// Expectations over the uniform attribute distribution:
    /// (undesired rate, realized effect).
    fn expectations(&self) -> (f64, f64) {
        let pi = self.cfg.treatment_prob;
        let n = Profile::all().count() as f64;
        let (mut rate, mut effect) = (0.0, 0.0);
        for p in Profile::all() {
            let (p0, p1) = (self.p_untreated(p), self.p_treated(p));
            rate += (1.0 - pi) * p0 + pi * p1;
            effect += p0 - p1;
        }
        (rate / n, effect / n)
    }
}

fn calibrate_intercept(cfg: &SynthConfig) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rate = Truth { cfg, intercept: mid }.expectations().0;
        if rate < cfg.undesired_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn millis(secs: f64) -> Duration {
    Duration::milliseconds((secs * 1000.0).round() as i64)
}

/// Generates a log and its planted truth; deterministic given the config.
pub fn generate(cfg: &SynthConfig) -> Result<(EventLog, GroundTruth), SynthError> {
    cfg.validate()?;
    let intercept = calibrate_intercept(cfg);
    let truth = Truth { cfg, intercept };
    let (expected_rate, expected_effect) = truth.expectations();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = Exp::new(1.0 / cfg.mean_interarrival_secs).expect("positive rate");
    let gaps = Exp::new(1.0 / cfg.mean_event_gap_secs).expect("positive rate");

    let mut clock = cfg.start;
    let mut traces = Vec::with_capacity(cfg.n_cases);
    let (mut undesired_count, mut treated_count) = (0usize, 0usize);
    for i in 0..cfg.n_cases {
        clock += millis(arrivals.sample(&mut rng));
        let case_id = format!("C{i:06}");
        let profile = Profile {
            goal: rng.random_range(0..LOAN_GOALS.len()),
            channel: rng.random_range(0..CHANNELS.len()),
            amount: rng.random_range(0..AMOUNTS.len()),
        };
        let treated = rng.random_bool(cfg.treatment_prob);
        let p = if treated {
            truth.p_treated(profile)
        } else {
            truth.p_untreated(profile)
        };
        let undesired = rng.random_bool(p);
        undesired_count += usize::from(undesired);
        treated_count += usize::from(treated);

        let mut activities: Vec<(String, Option<f64>)> = vec![(FIRST_ACTIVITY.into(), None)];
        let middle = rng.random_range(cfg.min_middle_events..=cfg.max_middle_events);
        for _ in 0..middle {
            let a = MIDDLE_ACTIVITIES[rng.random_range(0..MIDDLE_ACTIVITIES.len())];
            activities.push((a.into(), None));
        }
        let offers = if treated { 1 } else { rng.random_range(2..=3) };
        for _ in 0..offers {
            let offered = AMOUNTS[profile.amount] * rng.random_range(0.8..1.2);
            activities.push((cfg.offer_activity.clone(), Some(offered.round())));
        }
        let end = if !undesired {
            "A_Pending"
        } else if rng.random_bool(0.5) {
            "A_Denied"
        } else {
            "A_Cancelled"
        };
        activities.push((end.into(), None));

        let mut ts = clock;
        let mut events = Vec::with_capacity(activities.len());
        for (j, (activity, offered)) in activities.into_iter().enumerate() {
            if j > 0 {
                ts += millis(gaps.sample(&mut rng)).max(Duration::milliseconds(1));
            }
            let mut attrs = BTreeMap::new();
            if let Some(v) = offered {
                attrs.insert("offered_amount".to_string(), AttrValue::Numeric(v));
            }
            events.push(Event {
                case_id: case_id.clone(),
                activity,
                timestamp: ts,
                resource: Some(format!("User_{}", rng.random_range(1..=RESOURCES))),
                attrs,
            });
        }
        let case_attrs = BTreeMap::from([
            ("loan_goal".to_string(), AttrValue::Categorical(LOAN_GOALS[profile.goal].into())),
            ("channel".to_string(), AttrValue::Categorical(CHANNELS[profile.channel].into())),
            ("amount".to_string(), AttrValue::Numeric(AMOUNTS[profile.amount])),
        ]);
        traces.push(Trace {
            case_id,
            case_attrs,
            events,
            outcome: Outcome::Unlabeled,
            treatment: Treatment::Unlabeled,
        });
    }

    let schema = LogSchema {
        case_attrs: BTreeMap::from([
            ("amount".to_string(), AttrKind::Numeric),
            ("channel".to_string(), AttrKind::Categorical),
            ("loan_goal".to_string(), AttrKind::Categorical),
        ]),
        event_attrs: BTreeMap::from([("offered_amount".to_string(), AttrKind::Numeric)]),
    };
    let n = cfg.n_cases as f64;
    let truth = GroundTruth {
        config: cfg.clone(),
        intercept,
        goal_coefficients: LOAN_GOALS
            .iter()
            .zip(GOAL_COEF)
            .map(|(g, c)| (g.to_string(), c * cfg.logit_scale))
            .collect(),
        channel_coefficients: CHANNELS
            .iter()
            .zip(CHANNEL_COEF)
            .map(|(g, c)| (g.to_string(), c * cfg.logit_scale))
            .collect(),
        amount_coefficient_per_step: AMOUNT_COEF_PER_STEP * cfg.logit_scale,
        expected_undesired_rate: expected_rate,
        expected_effect,
        empirical_undesired_rate: undesired_count as f64 / n,
        empirical_treated_fraction: treated_count as f64 / n,
    };
    Ok((EventLog::new(traces, schema), truth))
}
