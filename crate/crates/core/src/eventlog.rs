//! Labeled event logs: CSV ingest, outcome and treatment labeling, and the
//! temporal train/validation/test split.
//!
//! A log file is UTF-8 CSV with a header row. `case_id`, `activity` and
//! `timestamp` (RFC3339) are mandatory, `resource` is optional. Columns named
//! `case:<name>` hold case attributes (constant within a case) and columns
//! named `event:<name>` hold event attributes. Two reserved columns,
//! `label:outcome` and `label:treatment`, carry labels assigned by an earlier
//! run so that prepared splits can be read back without the labeling rules.
//! Any other column is ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CASE_ID: &str = "case_id";
pub const ACTIVITY: &str = "activity";
pub const TIMESTAMP: &str = "timestamp";
pub const RESOURCE: &str = "resource";
pub const OUTCOME_LABEL: &str = "label:outcome";
pub const TREATMENT_LABEL: &str = "label:treatment";
const CASE_PREFIX: &str = "case:";
const EVENT_PREFIX: &str = "event:";

/// Fewest traces a log may hold and still be split three ways.
pub const MIN_SPLIT_TRACES: usize = 5;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("schema error: missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp `{value}`")]
    BadTimestamp { row: u64, value: String },
    #[error("row {row}: empty `{column}`")]
    EmptyField { row: u64, column: String },
    #[error("row {row}: invalid label `{value}` in `{column}`")]
    BadLabel {
        row: u64,
        column: String,
        value: String,
    },
    #[error("integrity error: case `{case}` has conflicting values for `{attr}`")]
    CaseAttrConflict { case: String, attr: String },
    #[error("labeling conflict: case `{0}` matches both positive and negative end activities")]
    LabelConflict(String),
    #[error("invalid labeling rules: {0}")]
    InvalidRules(String),
    #[error("case `{0}` has no events")]
    EmptyTrace(String),
    #[error("insufficient data: {found} traces, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LogError> = std::result::Result<T, E>;

/// Value of a case or event attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Numeric(f64),
    Categorical(String),
}

impl AttrValue {
    /// Numeric reading of the value; categorical values that parse as
    /// numbers are accepted so a kind inferred differently in another file
    /// still encodes.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Numeric(v) => Some(*v),
            AttrValue::Categorical(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Numeric(v) => write!(f, "{v}"),
            AttrValue::Categorical(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Desired end state.
    Positive,
    /// Undesired end state (Y = 1).
    Negative,
    #[default]
    Unlabeled,
}

impl Outcome {
    pub fn is_undesired(self) -> Option<bool> {
        match self {
            Outcome::Positive => Some(false),
            Outcome::Negative => Some(true),
            Outcome::Unlabeled => None,
        }
    }

    fn as_label(self) -> &'static str {
        match self {
            Outcome::Positive => "positive",
            Outcome::Negative => "negative",
            Outcome::Unlabeled => "",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Outcome::Positive),
            "negative" => Some(Outcome::Negative),
            "" => Some(Outcome::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Treated,
    Untreated,
    #[default]
    Unlabeled,
}

impl Treatment {
    pub fn indicator(self) -> Option<bool> {
        match self {
            Treatment::Treated => Some(true),
            Treatment::Untreated => Some(false),
            Treatment::Unlabeled => None,
        }
    }

    fn as_label(self) -> &'static str {
        match self {
            Treatment::Treated => "treated",
            Treatment::Untreated => "untreated",
            Treatment::Unlabeled => "",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "treated" => Some(Treatment::Treated),
            "untreated" => Some(Treatment::Untreated),
            "" => Some(Treatment::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    pub resource: Option<String>,
    pub attrs: BTreeMap<String, AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    /// Case attributes, shared by every event of the trace.
    pub case_attrs: BTreeMap<String, AttrValue>,
    pub events: Vec<Event>,
    pub outcome: Outcome,
    pub treatment: Treatment,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn start(&self) -> Option<DateTime<Utc>> {
        self.events.first().map(|e| e.timestamp)
    }

    pub fn count_activity(&self, activity: &str) -> usize {
        self.events.iter().filter(|e| e.activity == activity).count()
    }
}

/// Declared attribute names and kinds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogSchema {
    pub case_attrs: BTreeMap<String, AttrKind>,
    pub event_attrs: BTreeMap<String, AttrKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub schema: LogSchema,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>, schema: LogSchema) -> Self {
        Self { traces, schema }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        parse_log(s.as_bytes())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_log(self, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }

    fn with_traces(&self, traces: Vec<Trace>) -> Self {
        Self {
            traces,
            schema: self.schema.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingRules {
    pub positive_end_activities: BTreeSet<String>,
    pub negative_end_activities: BTreeSet<String>,
    pub offer_activity: String,
    #[serde(default = "default_treated_max_offers")]
    pub treated_max_offers: usize,
}

fn default_treated_max_offers() -> usize {
    1
}

impl LabelingRules {
    /// Rules for the loan-application log: pending applications are the
    /// desired outcome, denied or cancelled ones the undesired outcome.
    pub fn loan_application() -> Self {
        Self {
            positive_end_activities: ["A_Pending".to_string()].into(),
            negative_end_activities: ["A_Denied".to_string(), "A_Cancelled".to_string()].into(),
            offer_activity: "O_Create Offer".to_string(),
            treated_max_offers: 1,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rules: Self =
            serde_json::from_str(s).map_err(|e| LogError::InvalidRules(e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self
            .positive_end_activities
            .intersection(&self.negative_end_activities)
            .next()
        {
            return Err(LogError::InvalidRules(format!(
                "activity `{a}` is both a positive and a negative end activity"
            )));
        }
        if self.treated_max_offers == 0 {
            return Err(LogError::InvalidRules(
                "treated_max_offers must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Cases removed by [`label_outcomes`] because no end-activity rule matched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub dropped_cases: Vec<String>,
}

impl DropReport {
    pub fn count(&self) -> usize {
        self.dropped_cases.len()
    }
}

struct RawRow {
    case_id: String,
    activity: String,
    timestamp: DateTime<Utc>,
    resource: Option<String>,
    outcome: Outcome,
    treatment: Treatment,
    case_vals: Vec<String>,
    event_vals: Vec<String>,
}

fn infer_kind<'a>(values: impl Iterator<Item = &'a str>) -> AttrKind {
    let mut seen = false;
    for v in values.filter(|v| !v.is_empty()) {
        seen = true;
        if !v.parse::<f64>().is_ok_and(f64::is_finite) {
            return AttrKind::Categorical;
        }
    }
    if seen {
        AttrKind::Numeric
    } else {
        AttrKind::Categorical
    }
}

fn to_value(raw: &str, kind: AttrKind) -> Option<AttrValue> {
    if raw.is_empty() {
        return None;
    }
    Some(match kind {
        AttrKind::Numeric => AttrValue::Numeric(raw.parse().expect("kind inferred numeric")),
        AttrKind::Categorical => AttrValue::Categorical(raw.to_string()),
    })
}

/// Parses a CSV event log. Traces appear in order of first occurrence in the
/// file; events within a trace are sorted by timestamp, stable on file order.
pub fn parse_log<R: Read>(input: R) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let col = |name: &str| find(name).ok_or_else(|| LogError::MissingColumn(name.to_string()));
    let case_col = col(CASE_ID)?;
    let activity_col = col(ACTIVITY)?;
    let ts_col = col(TIMESTAMP)?;
    let resource_col = find(RESOURCE);
    let outcome_col = find(OUTCOME_LABEL);
    let treatment_col = find(TREATMENT_LABEL);

    let prefixed = |prefix: &str| -> Vec<(usize, String)> {
        headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(prefix).map(|n| (i, n.to_string())))
            .collect()
    };
    let case_cols = prefixed(CASE_PREFIX);
    let event_cols = prefixed(EVENT_PREFIX);

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let non_empty = |i: usize, name: &str| {
            let v = field(i);
            if v.is_empty() {
                Err(LogError::EmptyField {
                    row: line,
                    column: name.to_string(),
                })
            } else {
                Ok(v.to_string())
            }
        };
        let case_id = non_empty(case_col, CASE_ID)?;
        let activity = non_empty(activity_col, ACTIVITY)?;
        let ts_raw = field(ts_col);
        let timestamp = DateTime::parse_from_rfc3339(ts_raw)
            .map_err(|_| LogError::BadTimestamp {
                row: line,
                value: ts_raw.to_string(),
            })?
            .with_timezone(&Utc);
        let resource = resource_col
            .map(field)
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        let outcome = match outcome_col.map(field) {
            None => Outcome::Unlabeled,
            Some(v) => Outcome::from_label(v).ok_or_else(|| LogError::BadLabel {
                row: line,
                column: OUTCOME_LABEL.into(),
                value: v.into(),
            })?,
        };
        let treatment = match treatment_col.map(field) {
            None => Treatment::Unlabeled,
            Some(v) => Treatment::from_label(v).ok_or_else(|| LogError::BadLabel {
                row: line,
                column: TREATMENT_LABEL.into(),
                value: v.into(),
            })?,
        };
        rows.push(RawRow {
            case_id,
            activity,
            timestamp,
            resource,
            outcome,
            treatment,
            case_vals: case_cols.iter().map(|(i, _)| field(*i).to_string()).collect(),
            event_vals: event_cols.iter().map(|(i, _)| field(*i).to_string()).collect(),
        });
    }

    let case_kinds: Vec<AttrKind> = (0..case_cols.len())
        .map(|j| infer_kind(rows.iter().map(|r| r.case_vals[j].as_str())))
        .collect();
    let event_kinds: Vec<AttrKind> = (0..event_cols.len())
        .map(|j| infer_kind(rows.iter().map(|r| r.event_vals[j].as_str())))
        .collect();

    let mut schema = LogSchema::default();
    for ((_, name), kind) in case_cols.iter().zip(&case_kinds) {
        schema.case_attrs.insert(name.clone(), *kind);
    }
    for ((_, name), kind) in event_cols.iter().zip(&event_kinds) {
        schema.event_attrs.insert(name.clone(), *kind);
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut traces: Vec<Trace> = Vec::new();
    for row in rows {
        let slot = *index.entry(row.case_id.clone()).or_insert_with(|| {
            traces.push(Trace {
                case_id: row.case_id.clone(),
                case_attrs: BTreeMap::new(),
                events: Vec::new(),
                outcome: row.outcome,
                treatment: row.treatment,
            });
            traces.len() - 1
        });
        let trace = &mut traces[slot];
        if trace.outcome != row.outcome {
            return Err(LogError::CaseAttrConflict {
                case: row.case_id,
                attr: OUTCOME_LABEL.into(),
            });
        }
        if trace.treatment != row.treatment {
            return Err(LogError::CaseAttrConflict {
                case: row.case_id,
                attr: TREATMENT_LABEL.into(),
            });
        }
        for (j, raw) in row.case_vals.iter().enumerate() {
            let Some(value) = to_value(raw, case_kinds[j]) else {
                continue;
            };
            let name = &case_cols[j].1;
            match trace.case_attrs.get(name) {
                Some(existing) if *existing != value => {
                    return Err(LogError::CaseAttrConflict {
                        case: row.case_id,
                        attr: name.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    trace.case_attrs.insert(name.clone(), value);
                }
            }
        }
        let attrs = row
            .event_vals
            .iter()
            .enumerate()
            .filter_map(|(j, raw)| to_value(raw, event_kinds[j]).map(|v| (event_cols[j].1.clone(), v)))
            .collect();
        trace.events.push(Event {
            case_id: row.case_id,
            activity: row.activity,
            timestamp: row.timestamp,
            resource: row.resource,
            attrs,
        });
    }
    for trace in &mut traces {
        trace.events.sort_by_key(|e| e.timestamp);
    }
    Ok(EventLog { traces, schema })
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Writes a log in the format [`parse_log`] reads. Label columns are emitted
/// only when some trace carries a label.
pub fn write_log<W: Write>(log: &EventLog, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let labeled = log
        .traces
        .iter()
        .any(|t| t.outcome != Outcome::Unlabeled || t.treatment != Treatment::Unlabeled);
    let mut header: Vec<String> = vec![CASE_ID.into(), ACTIVITY.into(), TIMESTAMP.into(), RESOURCE.into()];
    if labeled {
        header.push(OUTCOME_LABEL.into());
        header.push(TREATMENT_LABEL.into());
    }
    header.extend(log.schema.case_attrs.keys().map(|k| format!("{CASE_PREFIX}{k}")));
    header.extend(log.schema.event_attrs.keys().map(|k| format!("{EVENT_PREFIX}{k}")));
    writer.write_record(&header)?;

    for trace in &log.traces {
        for event in &trace.events {
            let mut record: Vec<String> = vec![
                trace.case_id.clone(),
                event.activity.clone(),
                format_timestamp(&event.timestamp),
                event.resource.clone().unwrap_or_default(),
            ];
            if labeled {
                record.push(trace.outcome.as_label().into());
                record.push(trace.treatment.as_label().into());
            }
            for name in log.schema.case_attrs.keys() {
                record.push(trace.case_attrs.get(name).map(|v| v.to_string()).unwrap_or_default());
            }
            for name in log.schema.event_attrs.keys() {
                record.push(event.attrs.get(name).map(|v| v.to_string()).unwrap_or_default());
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Assigns outcomes by end-activity membership. A trace that contains any
/// positive end activity is positive, any negative end activity negative;
/// traces matching neither are dropped and reported.
pub fn label_outcomes(log: &EventLog, rules: &LabelingRules) -> Result<(EventLog, DropReport)> {
    rules.validate()?;
    let mut kept = Vec::with_capacity(log.traces.len());
    let mut report = DropReport::default();
    for trace in &log.traces {
        if trace.is_empty() {
            return Err(LogError::EmptyTrace(trace.case_id.clone()));
        }
        let has = |set: &BTreeSet<String>| trace.events.iter().any(|e| set.contains(&e.activity));
        let outcome = match (has(&rules.positive_end_activities), has(&rules.negative_end_activities)) {
            (true, true) => return Err(LogError::LabelConflict(trace.case_id.clone())),
            (true, false) => Outcome::Positive,
            (false, true) => Outcome::Negative,
            (false, false) => {
                report.dropped_cases.push(trace.case_id.clone());
                continue;
            }
        };
        let mut t = trace.clone();
        t.outcome = outcome;
        kept.push(t);
    }
    Ok((log.with_traces(kept), report))
}

/// Assigns treatment from the number of offer events: between one and
/// `treated_max_offers` offers is treated, more is untreated, none leaves
/// the trace unlabeled (kept for outcome prediction only).
pub fn label_treatment(log: &EventLog, rules: &LabelingRules) -> EventLog {
    let traces = log
        .traces
        .iter()
        .map(|trace| {
            let offers = trace.count_activity(&rules.offer_activity);
            let mut t = trace.clone();
            t.treatment = match offers {
                0 => Treatment::Unlabeled,
                n if n <= rules.treated_max_offers => Treatment::Treated,
                _ => Treatment::Untreated,
            };
            t
        })
        .collect();
    log.with_traces(traces)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(LogError::InvalidFractions(format!("{parts:?} must all be positive")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(LogError::InvalidFractions(format!("{parts:?} must sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSplit {
    pub train: EventLog,
    pub validation: EventLog,
    pub test: EventLog,
}

/// Orders traces by start time (ties by case id) and cuts them into
/// `⌊n·train⌋`, `⌊n·validation⌋` and the remaining traces.
pub fn temporal_split(log: &EventLog, fractions: SplitFractions) -> Result<TemporalSplit> {
    fractions.validate()?;
    let n = log.len();
    if n < MIN_SPLIT_TRACES {
        return Err(LogError::InsufficientData {
            found: n,
            needed: MIN_SPLIT_TRACES,
        });
    }
    let mut ordered: Vec<&Trace> = log.traces.iter().collect();
    for t in &ordered {
        if t.is_empty() {
            return Err(LogError::EmptyTrace(t.case_id.clone()));
        }
    }
    ordered.sort_by(|a, b| a.start().cmp(&b.start()).then_with(|| a.case_id.cmp(&b.case_id)));

    // The epsilon keeps products such as 10 * 0.6 from landing a hair below
    // the integer.
    let cut = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let n_train = cut(fractions.train);
    let n_val = cut(fractions.validation).min(n - n_train);
    let take = |range: std::ops::Range<usize>| {
        log.with_traces(ordered[range].iter().map(|t| (*t).clone()).collect())
    };
    Ok(TemporalSplit {
        train: take(0..n_train),
        validation: take(n_train..n_train + n_val),
        test: take(n_train + n_val..n),
    })
}
