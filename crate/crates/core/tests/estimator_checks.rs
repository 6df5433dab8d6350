use prpm_core::estimators::{
    roc_auc, sigmoid, train_cate, train_outcome_classifier, train_outcome_classifier_traced, CausalSample,
    LogisticObjective, TrainConfig,
};
use prpm_core::{CateModel, FeatureVector, OutcomeModel};
use prpm_testkit::fixtures::rng;
use prpm_testkit::recovery::{random_problem, separable, synthetic_recovery};
use rand::Rng;

/// Relative error of an analytic gradient against central differences.
fn gradient_error(obj: &LogisticObjective, params: &[f64]) -> f64 {
    let g = obj.gradient(params);
    let h = 1e-6;
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..params.len() {
        let mut up = params.to_vec();
        let mut down = params.to_vec();
        up[i] += h;
        down[i] -= h;
        let fd = (obj.loss(&up) - obj.loss(&down)) / (2.0 * h);
        diff += (fd - g[i]).powi(2);
        norm += g[i].powi(2).max(fd * fd);
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..100 {
        let (rows, labels, params) = random_problem(seed, 40, 5);
        let obj = LogisticObjective::new(&rows, &labels, 5, 0.01 * (seed % 3) as f64);
        let err = gradient_error(&obj, &params);
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn loss_decreases_at_default_rate() {
    let data = separable(500, 1);
    let samples: Vec<(&FeatureVector, bool)> = data.iter().map(|(x, y)| (x, *y)).collect();
    let (_, history) = train_outcome_classifier_traced(&samples, &TrainConfig::default()).unwrap();
    assert_eq!(history.len(), 501);
    assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn separable_data_reaches_high_auc_on_held_out_half() {
    let data = separable(2000, 2);
    let (fit_half, held_out) = data.split_at(1000);
    let samples: Vec<(&FeatureVector, bool)> = fit_half.iter().map(|(x, y)| (x, *y)).collect();
    let model = train_outcome_classifier(&samples, &TrainConfig::default()).unwrap();
    let scores: Vec<f64> = held_out.iter().map(|(x, _)| model.predict_uout(x).unwrap()).collect();
    let labels: Vec<bool> = held_out.iter().map(|(_, y)| *y).collect();
    assert!(roc_auc(&scores, &labels).unwrap() >= 0.95);
    assert!(scores.iter().all(|p| *p > 0.0 && *p < 1.0));
}

#[test]
fn training_is_deterministic() {
    let data = separable(300, 3);
    let samples: Vec<(&FeatureVector, bool)> = data.iter().map(|(x, y)| (x, *y)).collect();
    let a = train_outcome_classifier(&samples, &TrainConfig::default()).unwrap();
    let b = train_outcome_classifier(&samples, &TrainConfig::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let back = OutcomeModel::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn auc_agrees_with_pair_counting() {
    let mut g = rng(4);
    for _ in 0..20 {
        let n = g.random_range(2..60);
        let scores: Vec<f64> = (0..n).map(|_| (g.random_range(0..10) as f64) / 10.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| g.random_bool(0.5)).collect();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        match roc_auc(&scores, &labels) {
            Some(auc) => assert!((auc - wins / pairs).abs() < 1e-12),
            None => assert_eq!(pairs, 0.0),
        }
    }
}

/// Binary treatment with P(Y=1 | T=0) = 0.6 and P(Y=1 | T=1) = 0.4 and
/// covariates that carry no information.
fn coin_flip_samples(n: usize, p0: f64, p1: f64, seed: u64) -> Vec<CausalSample> {
    let mut g = rng(seed);
    (0..n)
        .map(|_| {
            let treated = g.random_bool(0.5);
            let x = FeatureVector(vec![g.random_range(-1.0..1.0), g.random_range(-1.0..1.0)]);
            CausalSample {
                treated,
                undesired: g.random_bool(if treated { p1 } else { p0 }),
                w: x.clone(),
                x,
            }
        })
        .collect()
}

fn mean_cate(model: &CateModel, samples: &[CausalSample]) -> f64 {
    samples.iter().map(|s| model.estimate_cate(&s.x).unwrap()).sum::<f64>() / samples.len() as f64
}

#[test]
fn recovers_planted_effect_in_randomized_data() {
    let samples = coin_flip_samples(10_000, 0.6, 0.4, 5);
    let model = train_cate(&samples, &TrainConfig::default()).unwrap();
    assert!((mean_cate(&model, &samples) - 0.2).abs() <= 0.05);
    let null = coin_flip_samples(10_000, 0.5, 0.5, 6);
    let model = train_cate(&null, &TrainConfig::default()).unwrap();
    assert!(mean_cate(&model, &null).abs() <= 0.05);
}

#[test]
fn recovers_planted_effect_from_event_logs() {
    let r = synthetic_recovery(0.2, 10_000, 11);
    assert!((r.planted - 0.2).abs() < 1e-9);
    assert!((r.mean_cate - 0.2).abs() <= 0.05, "{r:?}");
    let r = synthetic_recovery(0.0, 10_000, 12);
    assert!(r.mean_cate.abs() <= 0.05, "{r:?}");
}

#[test]
fn effect_sign_follows_undesired_outcome() {
    // Treatment lowers the undesired rate, so the effect is positive.
    let samples = coin_flip_samples(4000, 0.8, 0.3, 7);
    let model = train_cate(&samples, &TrainConfig::default()).unwrap();
    let c = mean_cate(&model, &samples);
    assert!(c > 0.35 && c < 0.65, "{c}");
    let x = &samples[0].x;
    let diff = model.control_model.predict_uout(x).unwrap() - model.treated_model.predict_uout(x).unwrap();
    assert_eq!(model.estimate_cate(x).unwrap(), diff);
}

#[test]
fn one_sided_arm_is_rejected() {
    let mut samples = coin_flip_samples(100, 0.6, 0.4, 8);
    samples.iter_mut().for_each(|s| s.treated = true);
    assert!(train_cate(&samples, &TrainConfig::default()).is_err());
}

#[test]
fn sigmoid_stays_inside_unit_interval() {
    for z in [-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6] {
        let p = sigmoid(z);
        assert!(p > 0.0 && p < 1.0, "{z}");
    }
}
