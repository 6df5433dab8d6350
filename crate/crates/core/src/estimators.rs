//! Outcome classifier and treatment-effect estimator.
//!
//! Both are built on L2-regularized logistic regression trained by
//! full-batch gradient descent. The CATE estimator is a two-model learner:
//! one classifier per treatment arm, the effect being the drop in
//! undesired-outcome probability when treated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncodingSchema, FeatureVector, Prefix};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("degenerate labels: training data must contain both outcome classes")]
    DegenerateLabels,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite feature at sample {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("schema error: expected width {expected}, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("insufficient {arm} arm: {reason}")]
    InsufficientArm { arm: Arm, reason: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = EstimatorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treated,
    Control,
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arm::Treated => "treated",
            Arm::Control => "control",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2_strength: f64,
    pub seed: u64,
    pub standardize_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 500,
            l2_strength: 1e-4,
            seed: 0,
            standardize_features: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EstimatorError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.l2_strength.is_finite() && self.l2_strength >= 0.0) {
            return Err(EstimatorError::InvalidConfig("l2_strength must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2_strength: f64,
    pub seed: u64,
    pub samples: usize,
    pub final_loss: f64,
}

/// Per-feature shift and scale learned on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    fn fit(rows: &[f64], width: usize) -> Self {
        let n = (rows.len() / width.max(1)) as f64;
        let mut mean = vec![0.0; width];
        for row in rows.chunks_exact(width) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for row in rows.chunks_exact(width) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, rows: &mut [f64]) {
        let width = self.mean.len();
        for row in rows.chunks_exact_mut(width) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Logits are clamped so probabilities stay strictly inside (0, 1).
const LOGIT_BOUND: f64 = 36.0;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_BOUND, LOGIT_BOUND);
    1.0 / (1.0 + (-z).exp())
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Regularized mean negative log-likelihood of a logistic model over a
/// row-major design matrix. Parameters are laid out as `[w_0 .. w_{d-1}, b]`;
/// the intercept is not penalized.
pub struct LogisticObjective<'a> {
    rows: &'a [f64],
    labels: &'a [f64],
    width: usize,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(rows: &'a [f64], labels: &'a [f64], width: usize, l2: f64) -> Self {
        assert_eq!(rows.len(), labels.len() * width, "design matrix shape");
        Self {
            rows,
            labels,
            width,
            l2,
        }
    }

    pub fn n_params(&self) -> usize {
        self.width + 1
    }

    fn logit(&self, params: &[f64], row: &[f64]) -> f64 {
        params[self.width] + row.iter().zip(params).map(|(x, w)| x * w).sum::<f64>()
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.l2 * params[..self.width].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let n = self.labels.len() as f64;
        let nll: f64 = self
            .rows
            .chunks_exact(self.width.max(1))
            .zip(self.labels)
            .map(|(row, y)| {
                let z = self.logit(params, &row[..self.width]);
                softplus(z) - y * z
            })
            .sum();
        nll / n + self.penalty(params)
    }

    /// Loss and gradient at `params` in one pass.
    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let n = self.labels.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut nll = 0.0;
        for (row, y) in self.rows.chunks_exact(self.width.max(1)).zip(self.labels) {
            let row = &row[..self.width];
            let z = self.logit(params, row);
            nll += softplus(z) - y * z;
            // Unclamped sigmoid: the gradient must match the loss exactly.
            let r = 1.0 / (1.0 + (-z).exp()) - y;
            for (g, x) in grad.iter_mut().zip(row) {
                *g += r * x;
            }
            grad[self.width] += r;
        }
        for (g, w) in grad.iter_mut().zip(params).take(self.width) {
            *g = *g / n + self.l2 * w;
        }
        grad[self.width] /= n;
        (nll / n + self.penalty(params), grad)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.loss_and_gradient(params).1
    }
}

/// Logistic model scoring the probability of the undesired outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardization: Option<Standardization>,
    pub meta: TrainMeta,
    #[serde(default)]
    pub schema_fingerprint: Option<String>,
}

impl OutcomeModel {
    /// Untrained model with the given weights; used for hand-built fixtures.
    pub fn from_parameters(weights: Vec<f64>, intercept: f64) -> Self {
        Self {
            meta: TrainMeta {
                iterations: 0,
                learning_rate: 0.0,
                l2_strength: 0.0,
                seed: 0,
                samples: 0,
                final_loss: f64::NAN,
            },
            weights,
            intercept,
            standardization: None,
            schema_fingerprint: None,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &FeatureVector) -> Result<f64> {
        check_width(self.width(), x)?;
        let z = match &self.standardization {
            Some(s) => x
                .as_slice()
                .iter()
                .zip(&self.weights)
                .zip(s.mean.iter().zip(&s.scale))
                .map(|((v, w), (m, sc))| w * (v - m) / sc)
                .sum::<f64>(),
            None => x.as_slice().iter().zip(&self.weights).map(|(v, w)| v * w).sum(),
        };
        Ok(self.intercept + z)
    }

    pub fn predict_uout(&self, x: &FeatureVector) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_width(expected: usize, x: &FeatureVector) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(EstimatorError::WidthMismatch {
            expected,
            found: x.len(),
        })
    }
}

/// Source of `P_uout` estimates.
pub trait OutcomeEstimator {
    fn predict_uout(&self, x: &FeatureVector) -> Result<f64>;
}

/// Source of `CATE_1` estimates: positive values mean the intervention lowers
/// the probability of the undesired outcome.
pub trait CateEstimator {
    fn estimate_cate(&self, x: &FeatureVector) -> Result<f64>;
}

impl OutcomeEstimator for OutcomeModel {
    fn predict_uout(&self, x: &FeatureVector) -> Result<f64> {
        OutcomeModel::predict_uout(self, x)
    }
}

fn design_matrix(samples: &[(&FeatureVector, bool)]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    if samples.len() < 2 {
        return Err(EstimatorError::TooFewSamples(samples.len()));
    }
    let width = samples[0].0.len();
    let mut rows = Vec::with_capacity(samples.len() * width);
    let mut labels = Vec::with_capacity(samples.len());
    for (i, (x, y)) in samples.iter().enumerate() {
        check_width(width, x)?;
        if let Some(col) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite { row: i, col });
        }
        rows.extend_from_slice(x.as_slice());
        labels.push(if *y { 1.0 } else { 0.0 });
    }
    if labels.iter().all(|&y| y == 1.0) || labels.iter().all(|&y| y == 0.0) {
        return Err(EstimatorError::DegenerateLabels);
    }
    Ok((rows, labels, width))
}

/// Trains the outcome classifier and also returns the loss before every
/// update and after the last one (`iterations + 1` values).
pub fn train_outcome_classifier_traced(
    samples: &[(&FeatureVector, bool)],
    cfg: &TrainConfig,
) -> Result<(OutcomeModel, Vec<f64>)> {
    cfg.validate()?;
    let (mut rows, labels, width) = design_matrix(samples)?;
    let standardization = cfg.standardize_features.then(|| {
        let s = Standardization::fit(&rows, width);
        s.apply(&mut rows);
        s
    });
    let objective = LogisticObjective::new(&rows, &labels, width, cfg.l2_strength);
    let mut params = vec![0.0; width + 1];
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        let (loss, grad) = objective.loss_and_gradient(&params);
        history.push(loss);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
    }
    let final_loss = objective.loss(&params);
    history.push(final_loss);
    let intercept = params.pop().expect("intercept");
    Ok((
        OutcomeModel {
            weights: params,
            intercept,
            standardization,
            meta: TrainMeta {
                iterations: cfg.iterations,
                learning_rate: cfg.learning_rate,
                l2_strength: cfg.l2_strength,
                seed: cfg.seed,
                samples: labels.len(),
                final_loss,
            },
            schema_fingerprint: None,
        },
        history,
    ))
}

/// Samples pair a feature vector with `true` for the undesired outcome.
pub fn train_outcome_classifier(
    samples: &[(&FeatureVector, bool)],
    cfg: &TrainConfig,
) -> Result<OutcomeModel> {
    train_outcome_classifier_traced(samples, cfg).map(|(m, _)| m)
}

/// One row of causal training data.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalSample {
    /// Intervention applied (T = 1).
    pub treated: bool,
    /// Undesired outcome observed (Y = 1).
    pub undesired: bool,
    /// Potential confounders.
    pub w: FeatureVector,
    /// Effect modifiers.
    pub x: FeatureVector,
}

/// Encodes labeled prefixes into causal samples. `X` is the full encoding;
/// `W` is the same vector without the features named in `w_exclude`.
/// Prefixes lacking an outcome or treatment label are skipped.
pub fn build_causal_samples(
    prefixes: &[Prefix<'_>],
    schema: &EncodingSchema,
    w_exclude: &[String],
) -> Vec<CausalSample> {
    let keep: Vec<bool> = schema
        .feature_names
        .iter()
        .map(|n| !w_exclude.contains(n))
        .collect();
    prefixes
        .iter()
        .filter_map(|p| {
            let treated = p.treatment().indicator()?;
            let undesired = p.outcome().is_undesired()?;
            let x = schema.encode(p);
            let w = x
                .as_slice()
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(v, _)| *v)
                .collect::<Vec<_>>()
                .into();
            Some(CausalSample {
                treated,
                undesired,
                w,
                x,
            })
        })
        .collect()
}

/// Two-model CATE estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub treated_model: OutcomeModel,
    pub control_model: OutcomeModel,
    pub config: TrainConfig,
    #[serde(default)]
    pub schema_fingerprint: Option<String>,
}

impl CateModel {
    pub fn from_models(treated_model: OutcomeModel, control_model: OutcomeModel) -> Self {
        Self {
            treated_model,
            control_model,
            config: TrainConfig::default(),
            schema_fingerprint: None,
        }
    }

    pub fn width(&self) -> usize {
        self.treated_model.width()
    }

    /// `P(undesired | untreated, x) - P(undesired | treated, x)`.
    pub fn estimate_cate(&self, x: &FeatureVector) -> Result<f64> {
        Ok(self.control_model.predict_uout(x)? - self.treated_model.predict_uout(x)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl CateEstimator for CateModel {
    fn estimate_cate(&self, x: &FeatureVector) -> Result<f64> {
        CateModel::estimate_cate(self, x)
    }
}

/// Fits one outcome classifier per arm on the effect modifiers `X`. `W` is
/// not used by this learner: it is a subset of `X`, which both arm models
/// already condition on.
pub fn train_cate(samples: &[CausalSample], cfg: &TrainConfig) -> Result<CateModel> {
    let arm = |treated: bool| -> Vec<(&FeatureVector, bool)> {
        samples
            .iter()
            .filter(|s| s.treated == treated)
            .map(|s| (&s.x, s.undesired))
            .collect()
    };
    let fit = |data: Vec<(&FeatureVector, bool)>, which: Arm| {
        if data.is_empty() {
            return Err(EstimatorError::InsufficientArm {
                arm: which,
                reason: "no samples".into(),
            });
        }
        train_outcome_classifier(&data, cfg).map_err(|e| match e {
            EstimatorError::DegenerateLabels | EstimatorError::TooFewSamples(_) => {
                EstimatorError::InsufficientArm {
                    arm: which,
                    reason: e.to_string(),
                }
            }
            other => other,
        })
    };
    let treated_model = fit(arm(true), Arm::Treated)?;
    let control_model = fit(arm(false), Arm::Control)?;
    if treated_model.width() != control_model.width() {
        return Err(EstimatorError::WidthMismatch {
            expected: treated_model.width(),
            found: control_model.width(),
        });
    }
    Ok(CateModel {
        treated_model,
        control_model,
        config: cfg.clone(),
        schema_fingerprint: None,
    })
}

/// Area under the ROC curve (Mann-Whitney statistic, ties counted half).
/// `None` when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Average 1-based rank of the tie block.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    Some((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn hand_set_model_predictions() {
        let m = OutcomeModel::from_parameters(vec![1.0], 0.0);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((m.predict_uout(&fv(&[2.0])).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8808).abs() < 1e-4);
        assert_eq!(m.predict_uout(&fv(&[0.0])).unwrap(), 0.5);

        let m = OutcomeModel::from_parameters(vec![2.0, -1.0], 1.0);
        assert_eq!(m.predict_uout(&fv(&[-1.0, -1.0])).unwrap(), 0.5);
    }

    #[test]
    fn width_mismatch() {
        let m = OutcomeModel::from_parameters(vec![1.0, 2.0], 0.0);
        assert!(matches!(
            m.predict_uout(&fv(&[1.0])),
            Err(EstimatorError::WidthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn extreme_logits_stay_inside_unit_interval() {
        let m = OutcomeModel::from_parameters(vec![1.0], 0.0);
        for x in [1e6, -1e6, 800.0, -800.0] {
            let p = m.predict_uout(&fv(&[x])).unwrap();
            assert!(p > 0.0 && p < 1.0, "{x} -> {p}");
        }
    }

    #[test]
    fn zero_iterations_predicts_half() {
        let a = fv(&[1.0, 3.0]);
        let b = fv(&[-2.0, 0.5]);
        let cfg = TrainConfig {
            iterations: 0,
            ..Default::default()
        };
        let m = train_outcome_classifier(&[(&a, true), (&b, false)], &cfg).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert_eq!(m.predict_uout(&fv(&[9.0, 9.0])).unwrap(), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let a = fv(&[1.0]);
        let err = train_outcome_classifier(&[(&a, true), (&a, true)], &TrainConfig::default());
        assert!(matches!(err, Err(EstimatorError::DegenerateLabels)));
    }

    #[test]
    fn non_finite_feature_rejected() {
        let a = fv(&[1.0]);
        let b = fv(&[f64::NAN]);
        let err = train_outcome_classifier(&[(&a, true), (&b, false)], &TrainConfig::default());
        assert!(matches!(err, Err(EstimatorError::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn intercept_only_recovers_base_rate() {
        let x = fv(&[0.0, 0.0]);
        let samples: Vec<(&FeatureVector, bool)> = (0..100).map(|i| (&x, i % 10 < 3)).collect();
        let cfg = TrainConfig {
            learning_rate: 2.0,
            iterations: 2000,
            l2_strength: 0.0,
            ..Default::default()
        };
        let m = train_outcome_classifier(&samples, &cfg).unwrap();
        for probe in [[0.0, 0.0], [5.0, -3.0]] {
            let p = m.predict_uout(&fv(&probe)).unwrap();
            assert!((p - 0.3).abs() < 1e-6, "{p}");
        }
    }

    #[test]
    fn cate_is_control_minus_treated() {
        // logit(0.9) and logit(0.6) as intercepts.
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let m = CateModel::from_models(
            OutcomeModel::from_parameters(vec![0.0], logit(0.6)),
            OutcomeModel::from_parameters(vec![0.0], logit(0.9)),
        );
        assert!((m.estimate_cate(&fv(&[1.0])).unwrap() - 0.3).abs() < 1e-12);
        let harmful = CateModel::from_models(
            OutcomeModel::from_parameters(vec![0.0], logit(0.8)),
            OutcomeModel::from_parameters(vec![0.0], logit(0.2)),
        );
        assert!((harmful.estimate_cate(&fv(&[1.0])).unwrap() + 0.6).abs() < 1e-12);
    }

    #[test]
    fn identical_arms_give_zero_effect() {
        let xs: Vec<FeatureVector> = (0..40).map(|i| fv(&[i as f64 / 10.0, (i % 3) as f64])).collect();
        let mut samples = Vec::new();
        for treated in [true, false] {
            for (i, x) in xs.iter().enumerate() {
                samples.push(CausalSample {
                    treated,
                    undesired: i % 4 == 0 || i > 30,
                    w: x.clone(),
                    x: x.clone(),
                });
            }
        }
        let m = train_cate(&samples, &TrainConfig::default()).unwrap();
        for x in &xs {
            assert_eq!(m.estimate_cate(x).unwrap(), 0.0);
        }
    }

    #[test]
    fn empty_arm_is_named() {
        let x = fv(&[1.0]);
        let samples = vec![
            CausalSample { treated: true, undesired: true, w: x.clone(), x: x.clone() },
            CausalSample { treated: true, undesired: false, w: x.clone(), x: x.clone() },
        ];
        let err = train_cate(&samples, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, EstimatorError::InsufficientArm { arm: Arm::Control, .. }));
    }

    #[test]
    fn auc_matches_pairwise_count() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.9, 0.2];
        let labels = [false, false, true, true, true, false, false];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((roc_auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-12);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn model_json_roundtrip() {
        let a = fv(&[1.0, 0.0]);
        let b = fv(&[0.0, 1.0]);
        let m = train_outcome_classifier(&[(&a, true), (&b, false)], &TrainConfig::default()).unwrap();
        assert_eq!(OutcomeModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
