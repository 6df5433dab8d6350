//! Planted-effect data for checking the estimators.

use prpm_core::encoding::{extract_prefixes, fit_schema};
use prpm_core::estimators::{build_causal_samples, train_cate, TrainConfig};
use prpm_core::eventlog::{label_outcomes, label_treatment};
use prpm_core::synth::{generate, SynthConfig};
use prpm_core::FeatureVector;
use rand::Rng;

use crate::fixtures::rng;

#[derive(Debug, Clone, Copy)]
pub struct Recovery {
    /// Mean estimated effect over all training cases.
    pub mean_cate: f64,
    /// Planted average effect.
    pub planted: f64,
}

/// Trains the two-model learner on one first-event prefix per synthetic
/// case and averages its estimates. The logit scale is kept small so that
/// `p0 - effect` never needs clamping.
pub fn synthetic_recovery(effect: f64, n_cases: usize, seed: u64) -> Recovery {
    let cfg = SynthConfig {
        n_cases,
        seed,
        effect,
        logit_scale: 0.5,
        ..SynthConfig::default()
    };
    let (log, truth) = generate(&cfg).unwrap();
    let rules = cfg.labeling_rules();
    let (labeled, _) = label_outcomes(&log, &rules).unwrap();
    let labeled = label_treatment(&labeled, &rules);
    let prefixes = extract_prefixes(&labeled, 1);
    let schema = fit_schema(&prefixes, 1, Some(&rules.offer_activity)).unwrap();
    let samples = build_causal_samples(&prefixes, &schema, &[]);
    let model = train_cate(&samples, &TrainConfig::default()).unwrap();
    let total: f64 = samples.iter().map(|s| model.estimate_cate(&s.x).unwrap()).sum();
    Recovery {
        mean_cate: total / samples.len() as f64,
        planted: truth.expected_effect,
    }
}

/// Two-feature data whose class is decided by the sign of
/// `x0 + 0.5 x1`, with a margin so the classes are separable.
pub fn separable(n: usize, seed: u64) -> Vec<(FeatureVector, bool)> {
    let mut g = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = [g.random_range(-1.0..1.0), g.random_range(-1.0..1.0), g.random_range(-1.0..1.0)];
        let s: f64 = x[0] + 0.5 * x[1];
        if s.abs() < 0.05 {
            continue;
        }
        out.push((FeatureVector(x.to_vec()), s > 0.0));
    }
    out
}

/// Random design matrix, labels and parameter vector for gradient checks.
pub fn random_problem(seed: u64, n: usize, width: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut g = rng(seed);
    let rows = (0..n * width).map(|_| g.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| f64::from(u8::from(g.random_bool(0.4)))).collect();
    let params = (0..=width).map(|_| g.random_range(-1.5..1.5)).collect();
    (rows, labels, params)
}
