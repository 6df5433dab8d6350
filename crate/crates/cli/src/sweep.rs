use std::cmp::Ordering;
use std::path::Path;

use prpm_core::sim::replay;
use prpm_core::{CostParams, DurationConfig, DurationKind, EventLog, Policy, ScoreTable, SimConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SweepConfig;
use crate::error::{CliError, Result};
use crate::io;
use crate::simulate::Scoring;

/// Column order of the sweep CSV.
pub const HEADER: [&str; 13] = [
    "resource_count",
    "resource_fraction",
    "c_uout",
    "c_t1",
    "tau",
    "duration_kind",
    "policy",
    "seed",
    "total_gain",
    "treated_cases",
    "treated_fraction",
    "candidate_count",
    "cate_sum",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub resource_count: usize,
    /// `resource_count` over the largest configured count.
    pub resource_fraction: f64,
    pub c_uout: f64,
    pub c_t1: f64,
    pub tau: f64,
    pub duration_kind: DurationKind,
    pub policy: Policy,
    pub seed: u64,
    pub total_gain: f64,
    pub treated_cases: usize,
    pub treated_fraction: f64,
    pub candidate_count: usize,
    pub cate_sum: f64,
}

impl SweepRow {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.resource_count
            .cmp(&other.resource_count)
            .then(self.c_uout.total_cmp(&other.c_uout))
            .then(self.tau.total_cmp(&other.tau))
            .then(self.duration_kind.cmp(&other.duration_kind))
            .then(self.policy.cmp(&other.policy))
            .then(self.seed.cmp(&other.seed))
    }
}

/// Runs every grid point in parallel and returns the rows in key order.
pub fn run_grid(log: &EventLog, scores: &ScoreTable, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let max = cfg.max_resources() as f64;
    let mut points = Vec::with_capacity(cfg.grid_size());
    for &r in &cfg.resource_counts {
        for &c_uout in &cfg.c_uout_values {
            for &tau in &cfg.tau_values {
                for &kind in &cfg.duration_kinds {
                    for &policy in &cfg.policies {
                        for &seed in &cfg.seeds {
                            points.push(SimConfig {
                                params: CostParams::new(c_uout, cfg.c_t1, tau)?,
                                capacity: r,
                                duration: DurationConfig {
                                    kind,
                                    ..cfg.duration.clone()
                                },
                                policy,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    let mut rows = points
        .par_iter()
        .map(|sim| {
            let res = replay(log, scores, sim)?;
            Ok(SweepRow {
                resource_count: sim.capacity,
                resource_fraction: sim.capacity as f64 / max,
                c_uout: sim.params.c_uout,
                c_t1: sim.params.c_t1,
                tau: sim.params.tau,
                duration_kind: sim.duration.kind,
                policy: sim.policy,
                seed: sim.seed,
                total_gain: res.total_gain,
                treated_cases: res.treated_cases,
                treated_fraction: res.treated_fraction,
                candidate_count: res.candidate_cases,
                cate_sum: res.cate_sum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(SweepRow::key_cmp);
    Ok(rows)
}

pub fn write_rows<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| CliError::data(e.to_string());
    if rows.is_empty() {
        w.write_record(HEADER).map_err(wrap)?;
    }
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))
}

pub struct SweepArgs<'a> {
    pub log: &'a Path,
    pub models: Option<&'a Path>,
    pub scores: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
}

pub fn sweep(args: SweepArgs<'_>) -> Result<Vec<SweepRow>> {
    let mut cfg: SweepConfig = io::read_config(args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    let scoring = Scoring::load(args.models, args.scores)?;
    let log = io::read_log(args.log)?;
    let table = scoring.table_for(&log)?;
    run_grid(&log, &table, &cfg)
}
