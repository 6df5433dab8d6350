//! Command-line driver: prepares labeled splits from a raw log, trains the
//! outcome and effect estimators, and runs allocation experiments.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for data errors,
//! 4 when artifacts do not belong together.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod config;
pub mod error;
pub mod io;
pub mod prepare;
pub mod simulate;
pub mod sweep;
pub mod synth;
pub mod train;

pub use error::{CliError, ErrorKind, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "prpm", version, about = "Gain-driven intervention allocation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed overriding the one in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreSource {
    /// Directory holding schema.json, outcome_model.json and cate_model.json.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Score CSV (case_id,prefix_len,p_uout,cate) used instead of models.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Event log to replay.
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label a raw log and split it into train, validation and test sets.
    Prepare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
        /// Labeling rules JSON, overriding `rules` in the config.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Fit the encoding, the outcome classifier and the effect estimator.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by `prepare`.
        #[arg(long)]
        splits: PathBuf,
    },
    /// Replay a log under one configuration.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ScoreSource,
        #[command(flatten)]
        overrides: simulate::SimOverrides,
        /// Write the decision trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Replay a log over a configuration grid and write one CSV row per point.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ScoreSource,
    },
    /// Pick the threshold with the largest total gain on a (validation) log.
    OptimizeThreshold {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ScoreSource,
        #[command(flatten)]
        overrides: simulate::SimOverrides,
        /// Comma-separated thresholds to try.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Generate a synthetic loan-application log with a planted effect.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_cases: Option<usize>,
    },
}

fn say(quiet: bool, msg: impl FnOnce() -> String) {
    if !quiet {
        eprintln!("{}", msg());
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common, log, rules } => {
            let out = io::require(&common.out, "--out")?;
            let r = prepare::run(&log, rules.as_deref(), common.config.as_deref(), out)?;
            say(common.quiet, || {
                format!(
                    "kept {} of {} cases ({} dropped); train/validation/test = {}/{}/{}",
                    r.retained_cases,
                    r.input_cases,
                    r.dropped_cases.len(),
                    r.train.cases,
                    r.validation.cases,
                    r.test.cases
                )
            });
        }
        Command::Train { common, splits } => {
            let out = io::require(&common.out, "--out")?;
            let r = train::run(&splits, common.config.as_deref(), common.seed, out)?;
            if !common.quiet {
                println!("validation AUC: {}", fmt_opt(r.validation_auc));
                println!("mean CATE: {}", fmt_opt(r.validation_mean_cate));
            }
        }
        Command::Simulate {
            common,
            source,
            overrides,
            trace,
        } => {
            let output = simulate::simulate(simulate::SimulateArgs {
                log: &source.log,
                models: source.models.as_deref(),
                scores: source.scores.as_deref(),
                config: common.config.as_deref(),
                seed: common.seed,
                overrides: &overrides,
                trace: trace.as_deref(),
            })?;
            io::emit_json(&output, common.out.as_deref())?;
            for r in &output.results {
                say(common.quiet, || {
                    format!(
                        "{}: total gain {:.4}, treated {} of {} cases",
                        r.policy.as_str(),
                        r.total_gain,
                        r.treated_cases,
                        r.total_cases
                    )
                });
            }
        }
        Command::Sweep { common, source } => {
            let rows = sweep::sweep(sweep::SweepArgs {
                log: &source.log,
                models: source.models.as_deref(),
                scores: source.scores.as_deref(),
                config: common.config.as_deref(),
                seed: common.seed,
            })?;
            match common.out.as_deref() {
                Some(path) => sweep::write_rows(&rows, io::create(path)?).map_err(|e| e.at(path))?,
                None => sweep::write_rows(&rows, std::io::stdout().lock())?,
            }
            say(common.quiet, || format!("{} rows", rows.len()));
        }
        Command::OptimizeThreshold {
            common,
            source,
            overrides,
            taus,
        } => {
            let output = simulate::optimize_threshold(
                simulate::SimulateArgs {
                    log: &source.log,
                    models: source.models.as_deref(),
                    scores: source.scores.as_deref(),
                    config: common.config.as_deref(),
                    seed: common.seed,
                    overrides: &overrides,
                    trace: None,
                },
                taus.as_deref(),
            )?;
            io::emit_json(&output, common.out.as_deref())?;
            say(common.quiet, || format!("best tau: {}", output.best_tau));
        }
        Command::Synth { common, n_cases } => {
            let out = io::require(&common.out, "--out")?;
            let truth = synth::run(common.config.as_deref(), common.seed, n_cases, out)?;
            say(common.quiet, || {
                format!(
                    "{} cases, undesired rate {:.3}, treated fraction {:.3}",
                    truth.config.n_cases, truth.empirical_undesired_rate, truth.empirical_treated_fraction
                )
            });
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Argument errors are configuration errors.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::config(e.to_string()))?;
    run(cli)
}
