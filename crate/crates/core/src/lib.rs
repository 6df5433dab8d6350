//! Resource-constrained prescriptive process monitoring.
//!
//! The pipeline: parse and label an event log ([`eventlog`]), encode trace
//! prefixes ([`encoding`]), train an outcome classifier and a treatment-effect
//! estimator ([`estimators`]), turn their estimates into a net gain per case
//! ([`gain`]), and replay a test log through a simulator that hands a bounded
//! pool of resources to the most valuable running cases ([`sim`]).
//! [`synth`] generates logs with known ground truth.

pub mod encoding;
pub mod estimators;
pub mod eventlog;
pub mod gain;
pub mod scores;
pub mod sim;
pub mod synth;

pub use encoding::{EncodingSchema, FeatureVector, Prefix};
pub use estimators::{CateModel, OutcomeModel, TrainConfig};
pub use eventlog::{EventLog, LabelingRules, Outcome, Trace, Treatment};
pub use gain::{CostParams, GainAssessment};
pub use scores::{CaseScorer, ModelScorer, Score, ScoreTable};
pub use sim::{DurationConfig, DurationKind, Policy, SimConfig, SimulationResult};
