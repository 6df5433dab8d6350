//! Prefix extraction and aggregate encoding.
//!
//! A prefix of length `k` is encoded into a fixed-width vector: case
//! attributes are copied (numeric) or one-hot encoded (categorical), every
//! categorical event value becomes the number of times it occurs in the
//! prefix, numeric event attributes are summed, and a handful of engineered
//! features describe position and time of the prefix.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eventlog::{AttrValue, Event, EventLog, Outcome, Trace, Treatment};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("cannot compute a prefix-length cap of an empty log")]
    EmptyLog,
    #[error("percentile {0} outside (0, 1]")]
    BadPercentile(f64),
    #[error("cannot fit an encoding schema from zero prefixes")]
    NoPrefixes,
    #[error("prefix length cap must be at least 1")]
    ZeroCap,
    #[error("feature name `{0}` produced twice; rename the colliding attribute")]
    DuplicateFeature(String),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
}

/// The first `k` events of a trace, labeled like the trace.
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    trace: &'a Trace,
    k: usize,
}

impl<'a> Prefix<'a> {
    /// Returns `None` unless `1 <= k <= trace.len()`.
    pub fn new(trace: &'a Trace, k: usize) -> Option<Self> {
        (k >= 1 && k <= trace.len()).then_some(Self { trace, k })
    }

    pub fn case_id(&self) -> &'a str {
        &self.trace.case_id
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn events(&self) -> &'a [Event] {
        &self.trace.events[..self.k]
    }

    pub fn case_attrs(&self) -> &'a BTreeMap<String, AttrValue> {
        &self.trace.case_attrs
    }

    pub fn outcome(&self) -> Outcome {
        self.trace.outcome
    }

    pub fn treatment(&self) -> Treatment {
        self.trace.treatment
    }

    pub fn last_timestamp(&self) -> DateTime<Utc> {
        self.events()[self.k - 1].timestamp
    }

    pub fn trace(&self) -> &'a Trace {
        self.trace
    }
}

/// Nearest-rank percentile: the element at 1-based index `⌈p·n⌉` of the
/// ascending lengths.
pub fn nearest_rank(lengths: &[usize], percentile: f64) -> Result<usize, EncodingError> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(EncodingError::BadPercentile(percentile));
    }
    if lengths.is_empty() {
        return Err(EncodingError::EmptyLog);
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = ((percentile * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

pub fn prefix_length_cap(log: &EventLog, percentile: f64) -> Result<usize, EncodingError> {
    let lengths: Vec<usize> = log.traces.iter().map(Trace::len).collect();
    nearest_rank(&lengths, percentile)
}

/// All prefixes of length `1..=min(len, cap)` of every trace, trace by trace.
pub fn extract_prefixes(log: &EventLog, cap: usize) -> Vec<Prefix<'_>> {
    log.traces
        .iter()
        .flat_map(|t| (1..=t.len().min(cap)).map(move |k| Prefix { trace: t, k }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventField {
    Resource,
    Activity,
    Attr(String),
}

impl EventField {
    fn value_of(&self, event: &Event) -> Option<String> {
        match self {
            EventField::Resource => event.resource.clone(),
            EventField::Activity => Some(event.activity.clone()),
            EventField::Attr(name) => event.attrs.get(name).map(|v| v.to_string()),
        }
    }

    fn feature_prefix(&self) -> String {
        match self {
            EventField::Resource => "res".into(),
            EventField::Activity => "activity".into(),
            EventField::Attr(name) => name.clone(),
        }
    }
}

/// Aggregated numeric event features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericFeature {
    /// Sum of a numeric event attribute over the prefix.
    Sum(String),
    /// Prefix length.
    EventNumber,
    /// Offer events seen so far.
    OfferCount,
    HourOfDay,
    DayOfMonth,
    Month,
    /// Seconds between the first and the last event of the prefix.
    ElapsedSeconds,
}

impl NumericFeature {
    pub fn is_engineered(&self) -> bool {
        !matches!(self, NumericFeature::Sum(_))
    }

    fn name(&self) -> String {
        match self {
            NumericFeature::Sum(attr) => format!("sum_{attr}"),
            NumericFeature::EventNumber => "event_number".into(),
            NumericFeature::OfferCount => "offer_count".into(),
            NumericFeature::HourOfDay => "hour_of_day".into(),
            NumericFeature::DayOfMonth => "day_of_month".into(),
            NumericFeature::Month => "month".into(),
            NumericFeature::ElapsedSeconds => "sum_time".into(),
        }
    }
}

const ENGINEERED: [NumericFeature; 6] = [
    NumericFeature::EventNumber,
    NumericFeature::OfferCount,
    NumericFeature::HourOfDay,
    NumericFeature::DayOfMonth,
    NumericFeature::Month,
    NumericFeature::ElapsedSeconds,
];

/// Fixed-width feature vector laid out by an [`EncodingSchema`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Vocabulary and layout of the aggregate encoding, fitted on training
/// prefixes. Feature order is case numerics, case one-hots, event value
/// counts, then numeric aggregates, each group in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    pub case_numeric_attrs: Vec<String>,
    pub case_categorical_domains: BTreeMap<String, Vec<String>>,
    pub event_categorical_domains: Vec<(EventField, Vec<String>)>,
    pub event_numeric_features: Vec<NumericFeature>,
    pub offer_activity: Option<String>,
    pub feature_names: Vec<String>,
    pub max_prefix_len: usize,
}

/// Fits the encoding vocabulary from training prefixes. `offer_activity`
/// names the activity counted by the `offer_count` feature.
pub fn fit_schema(
    prefixes: &[Prefix<'_>],
    cap: usize,
    offer_activity: Option<&str>,
) -> Result<EncodingSchema, EncodingError> {
    if prefixes.is_empty() {
        return Err(EncodingError::NoPrefixes);
    }
    if cap == 0 {
        return Err(EncodingError::ZeroCap);
    }
    let mut case_values: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut case_categorical: BTreeSet<&str> = BTreeSet::new();
    let mut event_values: BTreeMap<EventField, BTreeSet<String>> = BTreeMap::new();
    let mut numeric_event_attrs: BTreeSet<&str> = BTreeSet::new();
    let mut categorical_event_attrs: BTreeSet<&str> = BTreeSet::new();

    for p in prefixes {
        for (name, value) in p.case_attrs() {
            let set = case_values.entry(name).or_default();
            if let AttrValue::Categorical(_) = value {
                case_categorical.insert(name);
            }
            set.insert(value.to_string());
        }
        for e in p.events() {
            event_values.entry(EventField::Activity).or_default().insert(e.activity.clone());
            if let Some(r) = &e.resource {
                event_values.entry(EventField::Resource).or_default().insert(r.clone());
            }
            for (name, value) in &e.attrs {
                match value {
                    AttrValue::Numeric(_) => {
                        numeric_event_attrs.insert(name);
                    }
                    AttrValue::Categorical(s) => {
                        categorical_event_attrs.insert(name);
                        event_values
                            .entry(EventField::Attr(name.clone()))
                            .or_default()
                            .insert(s.clone());
                    }
                }
            }
        }
    }
    // An attribute seen with both kinds is treated as categorical; collect
    // its numeric values as well so the domain is complete.
    for name in categorical_event_attrs.intersection(&numeric_event_attrs) {
        let set = event_values.entry(EventField::Attr(name.to_string())).or_default();
        for p in prefixes {
            for e in p.events() {
                if let Some(v) = e.attrs.get(*name) {
                    set.insert(v.to_string());
                }
            }
        }
    }

    let mut case_numeric_attrs = Vec::new();
    let mut case_categorical_domains = BTreeMap::new();
    for (name, values) in case_values {
        if case_categorical.contains(name) {
            case_categorical_domains.insert(name.to_string(), values.into_iter().collect());
        } else {
            case_numeric_attrs.push(name.to_string());
        }
    }
    let event_categorical_domains = event_values
        .into_iter()
        .map(|(field, values)| (field, values.into_iter().collect()))
        .collect();
    let mut event_numeric_features: Vec<NumericFeature> = numeric_event_attrs
        .difference(&categorical_event_attrs)
        .map(|a| NumericFeature::Sum(a.to_string()))
        .collect();
    event_numeric_features.extend(ENGINEERED.iter().cloned());

    let mut schema = EncodingSchema {
        case_numeric_attrs,
        case_categorical_domains,
        event_categorical_domains,
        event_numeric_features,
        offer_activity: offer_activity.map(str::to_string),
        feature_names: Vec::new(),
        max_prefix_len: cap,
    };
    schema.feature_names = schema.layout_names();
    let mut seen = BTreeSet::new();
    for name in &schema.feature_names {
        if !seen.insert(name) {
            return Err(EncodingError::DuplicateFeature(name.clone()));
        }
    }
    Ok(schema)
}

impl EncodingSchema {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    fn layout_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.case_numeric_attrs.clone();
        for (attr, values) in &self.case_categorical_domains {
            names.extend(values.iter().map(|v| format!("{attr}_{v}")));
        }
        for (field, values) in &self.event_categorical_domains {
            let prefix = field.feature_prefix();
            names.extend(values.iter().map(|v| format!("{prefix}_{v}")));
        }
        names.extend(self.event_numeric_features.iter().map(NumericFeature::name));
        names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Hex SHA-256 of the serialized schema; models record it so they are
    /// only ever paired with the schema they were trained on.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> Result<String, EncodingError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, EncodingError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Aggregate encoding of one prefix. Values never seen in training
    /// contribute nothing.
    pub fn encode(&self, prefix: &Prefix<'_>) -> FeatureVector {
        let mut out = Vec::with_capacity(self.width());
        let attrs = prefix.case_attrs();
        for name in &self.case_numeric_attrs {
            out.push(attrs.get(name).and_then(AttrValue::as_f64).unwrap_or(0.0));
        }
        for (name, domain) in &self.case_categorical_domains {
            let base = out.len();
            out.resize(base + domain.len(), 0.0);
            if let Some(v) = attrs.get(name) {
                if let Ok(i) = domain.binary_search(&v.to_string()) {
                    out[base + i] = 1.0;
                }
            }
        }
        let events = prefix.events();
        for (field, domain) in &self.event_categorical_domains {
            let base = out.len();
            out.resize(base + domain.len(), 0.0);
            for e in events {
                if let Some(v) = field.value_of(e) {
                    if let Ok(i) = domain.binary_search(&v) {
                        out[base + i] += 1.0;
                    }
                }
            }
        }
        let first = events[0].timestamp;
        let last = prefix.last_timestamp();
        for feature in &self.event_numeric_features {
            out.push(match feature {
                NumericFeature::Sum(attr) => events
                    .iter()
                    .filter_map(|e| e.attrs.get(attr).and_then(AttrValue::as_f64))
                    .sum(),
                NumericFeature::EventNumber => prefix.len() as f64,
                NumericFeature::OfferCount => self
                    .offer_activity
                    .as_deref()
                    .map_or(0, |a| events.iter().filter(|e| e.activity == a).count())
                    as f64,
                NumericFeature::HourOfDay => last.hour() as f64,
                NumericFeature::DayOfMonth => last.day() as f64,
                NumericFeature::Month => last.month() as f64,
                NumericFeature::ElapsedSeconds => {
                    (last - first).num_milliseconds() as f64 / 1000.0
                }
            });
        }
        debug_assert_eq!(out.len(), self.width());
        FeatureVector(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::EventLog;

    const FIG1: &str = "\
case_id,activity,timestamp,resource,case:age,case:gender
1,A_submit_an_application,2021-03-01T12:00:00Z,emp_1,25,male
1,A_communicate_clients,2021-03-01T14:00:00Z,emp_2,25,male
2,A_submit_an_application,2021-03-02T09:00:00Z,emp_3,40,female
2,A_make_an_offer,2021-03-02T10:00:00Z,emp_4,40,female
2,A_verify_documents,2021-03-02T11:00:00Z,emp_2,40,female
";

    fn value(schema: &EncodingSchema, v: &FeatureVector, name: &str) -> f64 {
        v.0[schema.feature_index(name).unwrap_or_else(|| panic!("no feature {name}"))]
    }

    #[test]
    fn nearest_rank_cases() {
        let mut lengths = vec![2; 9];
        lengths.push(10);
        assert_eq!(nearest_rank(&lengths, 0.9).unwrap(), 2);
        assert_eq!(nearest_rank(&[7], 0.1).unwrap(), 7);
        assert_eq!(nearest_rank(&[7], 1.0).unwrap(), 7);
        let hundred: Vec<usize> = (1..=100).collect();
        assert_eq!(nearest_rank(&hundred, 0.9).unwrap(), 90);
        assert!(matches!(nearest_rank(&[], 0.9), Err(EncodingError::EmptyLog)));
        assert!(nearest_rank(&[1], 0.0).is_err());
    }

    #[test]
    fn prefixes_capped() {
        let acts: String = (0..7)
            .map(|i| format!("c,a{i},2021-01-01T00:0{i}:00Z\n"))
            .collect();
        let log = EventLog::from_csv_str(&format!("case_id,activity,timestamp\n{acts}")).unwrap();
        let lens: Vec<usize> = extract_prefixes(&log, 5).iter().map(Prefix::len).collect();
        assert_eq!(lens, [1, 2, 3, 4, 5]);

        let short = EventLog::from_csv_str(
            "case_id,activity,timestamp\nc,a,2021-01-01T00:00:00Z\nc,b,2021-01-01T00:01:00Z\n",
        )
        .unwrap();
        assert_eq!(extract_prefixes(&short, 5).len(), 2);
        assert!(extract_prefixes(&EventLog::default(), 5).is_empty());
    }

    #[test]
    fn aggregate_encoding_of_first_event() {
        let log = EventLog::from_csv_str(FIG1).unwrap();
        let prefixes = extract_prefixes(&log, 5);
        let schema = fit_schema(&prefixes, 5, None).unwrap();
        assert_eq!(schema.case_categorical_domains["gender"], ["female", "male"]);

        let v = schema.encode(&Prefix::new(&log.traces[0], 1).unwrap());
        assert_eq!(value(&schema, &v, "age"), 25.0);
        assert_eq!(value(&schema, &v, "gender_male"), 1.0);
        assert_eq!(value(&schema, &v, "gender_female"), 0.0);
        assert_eq!(value(&schema, &v, "res_emp_1"), 1.0);
        for r in ["res_emp_2", "res_emp_3", "res_emp_4"] {
            assert_eq!(value(&schema, &v, r), 0.0);
        }
        assert_eq!(value(&schema, &v, "activity_A_submit_an_application"), 1.0);
        for a in ["A_communicate_clients", "A_make_an_offer", "A_verify_documents"] {
            assert_eq!(value(&schema, &v, &format!("activity_{a}")), 0.0);
        }
        assert_eq!(value(&schema, &v, "sum_time"), 0.0);
        assert_eq!(value(&schema, &v, "event_number"), 1.0);
        assert_eq!(value(&schema, &v, "hour_of_day"), 12.0);
        assert_eq!(value(&schema, &v, "day_of_month"), 1.0);
        assert_eq!(value(&schema, &v, "month"), 3.0);
    }

    #[test]
    fn repeated_resource_counts() {
        let log = EventLog::from_csv_str(
            "case_id,activity,timestamp,resource\nc,a,2021-01-01T00:00:00Z,emp_2\nc,b,2021-01-01T00:01:30Z,emp_2\n",
        )
        .unwrap();
        let prefixes = extract_prefixes(&log, 5);
        let schema = fit_schema(&prefixes, 5, None).unwrap();
        let v = schema.encode(&prefixes[1]);
        assert_eq!(value(&schema, &v, "res_emp_2"), 2.0);
        assert_eq!(value(&schema, &v, "sum_time"), 90.0);
    }

    #[test]
    fn unseen_values_encode_to_zero() {
        let train = EventLog::from_csv_str(FIG1).unwrap();
        let schema = fit_schema(&extract_prefixes(&train, 5), 5, None).unwrap();
        let other = EventLog::from_csv_str(
            "case_id,activity,timestamp,resource,case:gender\nz,brand_new,2021-01-01T00:00:00Z,nobody,other\n",
        )
        .unwrap();
        let v = schema.encode(&Prefix::new(&other.traces[0], 1).unwrap());
        assert_eq!(v.len(), schema.width());
        for (i, name) in schema.feature_names.iter().enumerate() {
            if name.starts_with("activity_") || name.starts_with("res_") || name.starts_with("gender_") {
                assert_eq!(v.0[i], 0.0, "{name}");
            }
        }
    }

    #[test]
    fn only_engineered_numeric_features_without_numeric_event_attrs() {
        let log = EventLog::from_csv_str(FIG1).unwrap();
        let schema = fit_schema(&extract_prefixes(&log, 5), 5, None).unwrap();
        assert!(schema.event_numeric_features.iter().all(NumericFeature::is_engineered));
    }

    #[test]
    fn numeric_event_attrs_summed_and_categorical_counted() {
        let log = EventLog::from_csv_str(
            "case_id,activity,timestamp,event:amount,event:channel\n\
             c,a,2021-01-01T00:00:00Z,1.5,web\n\
             c,b,2021-01-01T00:00:01Z,2,web\n\
             c,b,2021-01-01T00:00:02Z,,mail\n",
        )
        .unwrap();
        let prefixes = extract_prefixes(&log, 5);
        let schema = fit_schema(&prefixes, 5, None).unwrap();
        assert_eq!(
            schema.event_categorical_domains,
            vec![
                (EventField::Activity, vec!["a".to_string(), "b".to_string()]),
                (EventField::Attr("channel".into()), vec!["mail".to_string(), "web".to_string()]),
            ]
        );
        let v = schema.encode(&prefixes[2]);
        assert_eq!(value(&schema, &v, "sum_amount"), 3.5);
        assert_eq!(value(&schema, &v, "channel_web"), 2.0);
        assert_eq!(value(&schema, &v, "activity_b"), 2.0);
    }

    #[test]
    fn offer_count_uses_configured_activity() {
        let log = EventLog::from_csv_str(
            "case_id,activity,timestamp\nc,offer,2021-01-01T00:00:00Z\nc,x,2021-01-01T00:00:01Z\nc,offer,2021-01-01T00:00:02Z\n",
        )
        .unwrap();
        let prefixes = extract_prefixes(&log, 5);
        let schema = fit_schema(&prefixes, 5, Some("offer")).unwrap();
        assert_eq!(value(&schema, &schema.encode(&prefixes[2]), "offer_count"), 2.0);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(matches!(fit_schema(&[], 5, None), Err(EncodingError::NoPrefixes)));
    }

    #[test]
    fn schema_json_roundtrip_keeps_fingerprint() {
        let log = EventLog::from_csv_str(FIG1).unwrap();
        let schema = fit_schema(&extract_prefixes(&log, 3), 3, Some("A_make_an_offer")).unwrap();
        let back = EncodingSchema::from_json(&schema.to_json().unwrap()).unwrap();
        assert_eq!(back, schema);
        assert_eq!(back.fingerprint(), schema.fingerprint());
    }
}
