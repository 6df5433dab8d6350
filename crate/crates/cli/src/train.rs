use std::path::Path;

use prpm_core::encoding::{extract_prefixes, fit_schema, prefix_length_cap, Prefix};
use prpm_core::estimators::{build_causal_samples, roc_auc, train_cate, train_outcome_classifier};
use prpm_core::{CateModel, EncodingSchema, EventLog, FeatureVector, OutcomeModel};
use serde::Serialize;

use crate::config::TrainSettings;
use crate::error::{CliError, Result};
use crate::io;

pub const SCHEMA_FILE: &str = "schema.json";
pub const OUTCOME_FILE: &str = "outcome_model.json";
pub const CATE_FILE: &str = "cate_model.json";
pub const REPORT_FILE: &str = "train_report.json";

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub tool_version: &'static str,
    pub config: TrainSettings,
    pub schema_fingerprint: String,
    pub max_prefix_len: usize,
    pub feature_count: usize,
    pub train_prefixes: usize,
    pub causal_samples: usize,
    pub validation_prefixes: usize,
    /// `None` when the validation split lacks one of the classes.
    pub validation_auc: Option<f64>,
    pub validation_mean_cate: Option<f64>,
    pub train_final_loss: f64,
}

pub struct Artifacts {
    pub schema: EncodingSchema,
    pub outcome: OutcomeModel,
    pub cate: CateModel,
    pub report: TrainReport,
}

fn labeled(prefixes: &[Prefix<'_>], schema: &EncodingSchema) -> Vec<(FeatureVector, bool)> {
    prefixes
        .iter()
        .filter_map(|p| Some((schema.encode(p), p.outcome().is_undesired()?)))
        .collect()
}

/// Fits the encoding and both estimators on `train` and scores `validation`.
pub fn fit(train: &EventLog, validation: &EventLog, cfg: &TrainSettings) -> Result<Artifacts> {
    let cap = prefix_length_cap(train, cfg.prefix_percentile)?;
    let prefixes = extract_prefixes(train, cap);
    let schema = fit_schema(&prefixes, cap, Some(&cfg.offer_activity))?;
    let fingerprint = schema.fingerprint();

    let outcome_rows = labeled(&prefixes, &schema);
    if outcome_rows.is_empty() {
        return Err(CliError::data("train split carries no outcome labels; run `prepare` first"));
    }
    let refs: Vec<(&FeatureVector, bool)> = outcome_rows.iter().map(|(x, y)| (x, *y)).collect();
    let mut outcome = train_outcome_classifier(&refs, &cfg.training)?;
    outcome.schema_fingerprint = Some(fingerprint.clone());

    let samples = build_causal_samples(&prefixes, &schema, &cfg.w_exclude);
    let mut cate = train_cate(&samples, &cfg.training)?;
    cate.schema_fingerprint = Some(fingerprint.clone());

    let val_prefixes = extract_prefixes(validation, cap);
    let val_rows = labeled(&val_prefixes, &schema);
    let scores: Vec<f64> = val_rows
        .iter()
        .map(|(x, _)| outcome.predict_uout(x))
        .collect::<Result<_, _>>()?;
    let labels: Vec<bool> = val_rows.iter().map(|(_, y)| *y).collect();
    let cates: Vec<f64> = val_prefixes
        .iter()
        .map(|p| cate.estimate_cate(&schema.encode(p)))
        .collect::<Result<_, _>>()?;

    let report = TrainReport {
        tool_version: crate::VERSION,
        config: cfg.clone(),
        schema_fingerprint: fingerprint,
        max_prefix_len: cap,
        feature_count: schema.width(),
        train_prefixes: prefixes.len(),
        causal_samples: samples.len(),
        validation_prefixes: val_prefixes.len(),
        validation_auc: roc_auc(&scores, &labels),
        validation_mean_cate: (!cates.is_empty()).then(|| cates.iter().sum::<f64>() / cates.len() as f64),
        train_final_loss: outcome.meta.final_loss,
    };
    Ok(Artifacts {
        schema,
        outcome,
        cate,
        report,
    })
}

pub fn run(splits: &Path, config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<TrainReport> {
    let mut cfg: TrainSettings = io::read_config(config)?;
    if let Some(seed) = seed {
        cfg.training.seed = seed;
    }
    cfg.training.validate()?;
    let train = io::read_log(&splits.join(crate::prepare::SPLIT_FILES[0]))?;
    let validation = io::read_log(&splits.join(crate::prepare::SPLIT_FILES[1]))?;
    let a = fit(&train, &validation, &cfg)?;

    io::ensure_dir(out_dir)?;
    io::write_text(&out_dir.join(SCHEMA_FILE), &format!("{}\n", a.schema.to_json()?))?;
    io::write_text(&out_dir.join(OUTCOME_FILE), &format!("{}\n", a.outcome.to_json()?))?;
    io::write_text(&out_dir.join(CATE_FILE), &format!("{}\n", a.cate.to_json()?))?;
    io::write_text(&out_dir.join(REPORT_FILE), &io::to_json(&a.report))?;
    Ok(a.report)
}

/// Loads the three training artifacts from `dir`.
pub fn load(dir: &Path) -> Result<(EncodingSchema, OutcomeModel, CateModel)> {
    Ok((
        io::read_json(&dir.join(SCHEMA_FILE))?,
        io::read_json(&dir.join(OUTCOME_FILE))?,
        io::read_json(&dir.join(CATE_FILE))?,
    ))
}
