//! Per-prefix `(P_uout, CATE_1)` scores.
//!
//! The simulator asks a [`CaseScorer`] for the scores of every prefix it
//! replays. [`ModelScorer`] encodes the prefix and queries the trained
//! estimators; [`ScoreTable`] serves scores imported from a CSV file with the
//! header `case_id,prefix_len,p_uout,cate`, which lets externally trained
//! estimators drive the same simulation.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncodingSchema, Prefix};
use crate::estimators::{CateEstimator, CateModel, EstimatorError, OutcomeEstimator, OutcomeModel};
use crate::eventlog::EventLog;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("score file row {row}: {msg}")]
    Parse { row: u64, msg: String },
    #[error("score file lists ({case_id}, {prefix_len}) twice")]
    Duplicate { case_id: String, prefix_len: usize },
    #[error("incompatible artifacts: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub p_uout: f64,
    pub cate: f64,
}

pub trait CaseScorer {
    /// Scores for one prefix, or `None` when the scorer has no opinion (the
    /// previous assessment of the case then stands).
    fn score(&self, prefix: &Prefix<'_>) -> Result<Option<Score>, ScoreError>;

    /// Longest prefix that is still re-assessed; `None` for no limit.
    fn max_prefix_len(&self) -> Option<usize>;
}

/// Scores prefixes with a fitted schema and the two estimators.
pub struct ModelScorer<'a> {
    schema: &'a EncodingSchema,
    outcome: &'a dyn OutcomeEstimator,
    cate: &'a dyn CateEstimator,
}

impl<'a> ModelScorer<'a> {
    /// Pairs a schema with arbitrary estimators; no compatibility check.
    pub fn new(
        schema: &'a EncodingSchema,
        outcome: &'a dyn OutcomeEstimator,
        cate: &'a dyn CateEstimator,
    ) -> Self {
        Self {
            schema,
            outcome,
            cate,
        }
    }

    /// Pairs a schema with built-in models after checking that both were
    /// trained on it.
    pub fn checked(
        schema: &'a EncodingSchema,
        outcome: &'a OutcomeModel,
        cate: &'a CateModel,
    ) -> Result<Self, ScoreError> {
        let fingerprint = schema.fingerprint();
        let check = |name: &str, width: usize, fp: &Option<String>| {
            if width != schema.width() {
                return Err(ScoreError::Incompatible(format!(
                    "{name} has width {width}, schema has {}",
                    schema.width()
                )));
            }
            match fp {
                Some(fp) if *fp != fingerprint => Err(ScoreError::Incompatible(format!(
                    "{name} was trained on schema {fp}, got {fingerprint}"
                ))),
                _ => Ok(()),
            }
        };
        check("outcome model", outcome.width(), &outcome.schema_fingerprint)?;
        check("cate model", cate.width(), &cate.schema_fingerprint)?;
        Ok(Self::new(schema, outcome, cate))
    }
}

impl CaseScorer for ModelScorer<'_> {
    fn score(&self, prefix: &Prefix<'_>) -> Result<Option<Score>, ScoreError> {
        let x = self.schema.encode(prefix);
        Ok(Some(Score {
            p_uout: self.outcome.predict_uout(&x)?,
            cate: self.cate.estimate_cate(&x)?,
        }))
    }

    fn max_prefix_len(&self) -> Option<usize> {
        Some(self.schema.max_prefix_len)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    case_id: String,
    prefix_len: usize,
    p_uout: f64,
    cate: f64,
}

/// Scores keyed by `(case_id, prefix_len)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<(String, usize), Score>,
    max_prefix_len: Option<usize>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, case_id: &str, prefix_len: usize, score: Score) -> Option<Score> {
        self.scores.insert((case_id.to_string(), prefix_len), score)
    }

    pub fn get(&self, case_id: &str, prefix_len: usize) -> Option<Score> {
        self.scores.get(&(case_id.to_string(), prefix_len)).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn with_max_prefix_len(mut self, cap: Option<usize>) -> Self {
        self.max_prefix_len = cap;
        self
    }

    /// Scores every prefix of `log` up to the scorer's cap once, so repeated
    /// simulations over the same log skip encoding and inference.
    pub fn precompute(log: &EventLog, scorer: &dyn CaseScorer) -> Result<Self, ScoreError> {
        let cap = scorer.max_prefix_len();
        let mut table = Self::new().with_max_prefix_len(cap);
        for trace in &log.traces {
            let upto = cap.map_or(trace.len(), |c| c.min(trace.len()));
            for k in 1..=upto {
                let prefix = Prefix::new(trace, k).expect("k within trace");
                if let Some(s) = scorer.score(&prefix)? {
                    table.insert(&trace.case_id, k, s);
                }
            }
        }
        Ok(table)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ScoreError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        let mut table = Self::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row: ScoreRow = record.deserialize(Some(&headers)).map_err(|e| ScoreError::Parse {
                row: line,
                msg: e.to_string(),
            })?;
            if !(0.0..=1.0).contains(&row.p_uout) {
                return Err(ScoreError::Parse {
                    row: line,
                    msg: format!("p_uout {} outside [0, 1] for case {}", row.p_uout, row.case_id),
                });
            }
            if !row.cate.is_finite() {
                return Err(ScoreError::Parse {
                    row: line,
                    msg: format!("non-finite cate for case {}", row.case_id),
                });
            }
            let score = Score {
                p_uout: row.p_uout,
                cate: row.cate,
            };
            if table.insert(&row.case_id, row.prefix_len, score).is_some() {
                return Err(ScoreError::Duplicate {
                    case_id: row.case_id,
                    prefix_len: row.prefix_len,
                });
            }
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScoreError> {
        let mut writer = csv::Writer::from_writer(out);
        for ((case_id, prefix_len), s) in &self.scores {
            writer.serialize(ScoreRow {
                case_id: case_id.clone(),
                prefix_len: *prefix_len,
                p_uout: s.p_uout,
                cate: s.cate,
            })?;
        }
        writer.flush()?;
        Ok(())
    }
}

impl CaseScorer for ScoreTable {
    fn score(&self, prefix: &Prefix<'_>) -> Result<Option<Score>, ScoreError> {
        Ok(self.get(prefix.case_id(), prefix.len()))
    }

    fn max_prefix_len(&self) -> Option<usize> {
        self.max_prefix_len
    }
}
