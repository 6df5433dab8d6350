use std::path::{Path, PathBuf};

use prpm_core::sim::{replay, replay_traced, write_decision_trace};
use prpm_core::{
    CaseScorer, CateModel, DurationKind, EncodingSchema, EventLog, ModelScorer, OutcomeModel, Policy, ScoreTable,
    SimConfig, SimulationResult,
};
use serde::Serialize;

use crate::config::{PolicyChoice, SimSettings, DEFAULT_TAU_GRID};
use crate::error::{CliError, Result};
use crate::{io, train};

/// Where prefix scores come from: trained artifacts or an imported table.
pub enum Scoring {
    Models {
        schema: EncodingSchema,
        outcome: OutcomeModel,
        cate: CateModel,
    },
    Table(ScoreTable),
}

impl Scoring {
    pub fn load(models: Option<&Path>, scores: Option<&Path>) -> Result<Self> {
        match (models, scores) {
            (Some(dir), None) => {
                let (schema, outcome, cate) = train::load(dir)?;
                ModelScorer::checked(&schema, &outcome, &cate).map_err(|e| CliError::from(e).at(dir))?;
                Ok(Scoring::Models {
                    schema,
                    outcome,
                    cate,
                })
            }
            (None, Some(path)) => {
                let file = std::fs::File::open(path).map_err(|e| CliError::data(e.to_string()).at(path))?;
                ScoreTable::read_csv(std::io::BufReader::new(file))
                    .map(Scoring::Table)
                    .map_err(|e| CliError::from(e).at(path))
            }
            _ => Err(CliError::config("pass exactly one of --models or --scores")),
        }
    }

    pub fn scorer(&self) -> Result<Box<dyn CaseScorer + '_>> {
        Ok(match self {
            Scoring::Models {
                schema,
                outcome,
                cate,
            } => Box::new(ModelScorer::checked(schema, outcome, cate)?),
            Scoring::Table(t) => Box::new(t.clone()),
        })
    }

    /// Scores of every prefix the simulator will look at, computed once.
    pub fn table_for(&self, log: &EventLog) -> Result<ScoreTable> {
        match self {
            Scoring::Table(t) => Ok(t.clone()),
            Scoring::Models { .. } => Ok(ScoreTable::precompute(log, self.scorer()?.as_ref())?),
        }
    }
}

/// Flag overrides for [`SimSettings`].
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SimOverrides {
    /// Number of intervention resources.
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Probability threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Cost of the undesired outcome.
    #[arg(long)]
    pub c_uout: Option<f64>,
    /// Cost of one intervention.
    #[arg(long)]
    pub c_t1: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyChoice>,
    #[arg(long, value_parser = parse_kind)]
    pub duration_kind: Option<DurationKind>,
}

fn parse_kind(s: &str) -> std::result::Result<DurationKind, String> {
    DurationKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("expected one of fixed, truncated_normal, truncated_exponential; got `{s}`"))
}

impl SimOverrides {
    pub fn apply(&self, s: &mut SimSettings, seed: Option<u64>) {
        if let Some(v) = self.capacity {
            s.capacity = v;
        }
        if let Some(v) = self.tau {
            s.tau = v;
        }
        if let Some(v) = self.c_uout {
            s.c_uout = v;
        }
        if let Some(v) = self.c_t1 {
            s.c_t1 = v;
        }
        if let Some(v) = self.policy {
            s.policy = v;
        }
        if let Some(v) = self.duration_kind {
            s.duration.kind = v;
        }
        if let Some(v) = seed {
            s.seed = v;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub tool_version: &'static str,
    pub config: SimSettings,
    pub results: Vec<SimulationResult>,
}

pub struct SimulateArgs<'a> {
    pub log: &'a Path,
    pub models: Option<&'a Path>,
    pub scores: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub overrides: &'a SimOverrides,
    pub trace: Option<&'a Path>,
}

fn trace_path(base: &Path, policy: Policy, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|s| format!(".{}", s.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}.{}{ext}", policy.as_str()))
}

pub fn simulate(args: SimulateArgs<'_>) -> Result<SimulateOutput> {
    let mut settings: SimSettings = io::read_config(args.config)?;
    args.overrides.apply(&mut settings, args.seed);
    let policies = settings.policy.policies();
    let configs: Vec<SimConfig> = policies.iter().map(|&p| settings.sim_config(p)).collect::<Result<_>>()?;
    let scoring = Scoring::load(args.models, args.scores)?;
    let log = io::read_log(args.log)?;
    let scorer = scoring.scorer()?;

    let mut results = Vec::new();
    for cfg in &configs {
        let result = match args.trace {
            Some(base) => {
                let (r, trace) = replay_traced(&log, scorer.as_ref(), cfg)?;
                let path = trace_path(base, cfg.policy, configs.len() > 1);
                write_decision_trace(&trace, io::create(&path)?).map_err(|e| CliError::from(e).at(&path))?;
                r
            }
            None => replay(&log, scorer.as_ref(), cfg)?,
        };
        results.push(result);
    }
    Ok(SimulateOutput {
        tool_version: crate::VERSION,
        config: settings,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub tau: f64,
    pub total_gain: f64,
    pub treated_cases: usize,
    pub treated_fraction: f64,
    pub candidate_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdOutput {
    pub tool_version: &'static str,
    pub config: SimSettings,
    pub policy: Policy,
    pub tau_grid: Vec<f64>,
    pub best_tau: f64,
    pub table: Vec<ThresholdRow>,
}

/// One replay per threshold, in grid order.
pub fn scan_thresholds(log: &EventLog, scorer: &dyn CaseScorer, base: &SimConfig, taus: &[f64]) -> Result<Vec<ThresholdRow>> {
    taus.iter()
        .map(|&tau| {
            let mut cfg = base.clone();
            cfg.params.tau = tau;
            let r = replay(log, scorer, &cfg)?;
            Ok(ThresholdRow {
                tau,
                total_gain: r.total_gain,
                treated_cases: r.treated_cases,
                treated_fraction: r.treated_fraction,
                candidate_count: r.candidate_cases,
            })
        })
        .collect()
}

/// Threshold with the largest total gain; ties go to the smallest tau.
pub fn best_tau(table: &[ThresholdRow]) -> Option<f64> {
    table
        .iter()
        .reduce(|best, row| {
            if row.total_gain > best.total_gain || (row.total_gain == best.total_gain && row.tau < best.tau) {
                row
            } else {
                best
            }
        })
        .map(|r| r.tau)
}

pub fn optimize_threshold(args: SimulateArgs<'_>, taus: Option<&[f64]>) -> Result<ThresholdOutput> {
    let mut settings: SimSettings = io::read_config(args.config)?;
    args.overrides.apply(&mut settings, args.seed);
    let policy = match settings.policy {
        PolicyChoice::ProbabilityRanked => Policy::ProbabilityRanked,
        PolicyChoice::GainRanked | PolicyChoice::Both => Policy::GainRanked,
    };
    let grid = taus.map_or(DEFAULT_TAU_GRID.to_vec(), <[f64]>::to_vec);
    if grid.is_empty() {
        return Err(CliError::config("threshold grid is empty"));
    }
    let base = settings.sim_config(policy)?;
    for &tau in &grid {
        prpm_core::CostParams::new(base.params.c_uout, base.params.c_t1, tau)?;
    }
    let scoring = Scoring::load(args.models, args.scores)?;
    let log = io::read_log(args.log)?;
    let scorer = scoring.scorer()?;
    let table = scan_thresholds(&log, scorer.as_ref(), &base, &grid)?;
    Ok(ThresholdOutput {
        tool_version: crate::VERSION,
        config: settings,
        policy,
        best_tau: best_tau(&table).expect("non-empty grid"),
        tau_grid: grid,
        table,
    })
}
