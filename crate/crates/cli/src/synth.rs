use std::path::{Path, PathBuf};

use prpm_core::synth::{generate, GroundTruth, SynthConfig};

use crate::error::{CliError, Result};
use crate::io;

/// `log.csv` gets its planted truth in `log.truth.json`.
pub fn truth_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

pub fn run(config: Option<&Path>, seed: Option<u64>, n_cases: Option<usize>, out: &Path) -> Result<GroundTruth> {
    let mut cfg: SynthConfig = io::read_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = n_cases {
        cfg.n_cases = n;
    }
    let (log, truth) = generate(&cfg)?;
    let csv = log.to_csv_string().map_err(|e| CliError::from(e).at(out))?;
    io::write_text(out, &csv)?;
    io::write_text(&truth_path(out), &io::to_json(&truth))?;
    Ok(truth)
}
