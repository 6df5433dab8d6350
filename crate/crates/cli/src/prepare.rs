use std::path::Path;

use prpm_core::eventlog::{label_outcomes, label_treatment, temporal_split};
use prpm_core::{EventLog, LabelingRules, Outcome, Treatment};
use serde::Serialize;

use crate::config::PrepareConfig;
use crate::error::Result;
use crate::io;

pub const SPLIT_FILES: [&str; 3] = ["train.csv", "validation.csv", "test.csv"];
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub cases: usize,
    pub events: usize,
    pub undesired: usize,
    pub desired: usize,
    pub treated: usize,
    pub untreated: usize,
    pub treatment_unlabeled: usize,
}

impl SplitStats {
    fn of(log: &EventLog) -> Self {
        let count_o = |o: Outcome| log.traces.iter().filter(|t| t.outcome == o).count();
        let count_t = |t: Treatment| log.traces.iter().filter(|x| x.treatment == t).count();
        Self {
            cases: log.len(),
            events: log.event_count(),
            undesired: count_o(Outcome::Negative),
            desired: count_o(Outcome::Positive),
            treated: count_t(Treatment::Treated),
            untreated: count_t(Treatment::Untreated),
            treatment_unlabeled: count_t(Treatment::Unlabeled),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrepareReport {
    pub tool_version: &'static str,
    pub config: PrepareConfig,
    pub input_cases: usize,
    pub retained_cases: usize,
    pub dropped_cases: Vec<String>,
    pub train: SplitStats,
    pub validation: SplitStats,
    pub test: SplitStats,
}

pub fn run(log_path: &Path, rules: Option<&Path>, config: Option<&Path>, out_dir: &Path) -> Result<PrepareReport> {
    let mut cfg: PrepareConfig = io::read_config(config)?;
    if let Some(path) = rules {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::error::CliError::config(e.to_string()).at(path))?;
        cfg.rules = LabelingRules::from_json(&text).map_err(|e| crate::error::CliError::from(e).at(path))?;
    }
    cfg.rules.validate()?;
    cfg.fractions.validate()?;

    let raw = io::read_log(log_path)?;
    let (labeled, dropped) = label_outcomes(&raw, &cfg.rules).map_err(|e| crate::error::CliError::from(e).at(log_path))?;
    let labeled = label_treatment(&labeled, &cfg.rules);
    let split = temporal_split(&labeled, cfg.fractions)?;

    io::ensure_dir(out_dir)?;
    for (name, part) in SPLIT_FILES.iter().zip([&split.train, &split.validation, &split.test]) {
        io::write_text(&out_dir.join(name), &part.to_csv_string()?)?;
    }
    let report = PrepareReport {
        tool_version: crate::VERSION,
        config: cfg,
        input_cases: raw.len(),
        retained_cases: labeled.len(),
        dropped_cases: dropped.dropped_cases,
        train: SplitStats::of(&split.train),
        validation: SplitStats::of(&split.validation),
        test: SplitStats::of(&split.test),
    };
    io::write_text(&out_dir.join(REPORT_FILE), &io::to_json(&report))?;
    Ok(report)
}
