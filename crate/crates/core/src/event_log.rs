//! Event logs, traces and prefixes.
//!
//! A [`Trace`] is a non-empty, time-ordered sequence of [`Event`]s belonging to one
//! case, labelled with a boolean outcome (`true` = undesired). An [`EventLog`] is a
//! collection of traces with unique case ids. The preprocessing transforms in this
//! module are pure `EventLog -> EventLog` functions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label substituted for infrequent categorical values.
pub const OTHER_LABEL: &str = "other";
/// Label substituted for categorical values with nothing to carry forward.
pub const MISSING_LABEL: &str = "missing";

fn is_reserved(label: &str) -> bool {
    label == OTHER_LABEL || label == MISSING_LABEL
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("prefix length {k} out of range 1..={len}")]
    PrefixOutOfRange { k: usize, len: usize },
    #[error("split error: {0}")]
    Split(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LogError>;

/// Value of a case-level attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Real(f64),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    #[serde(default)]
    pub categorical: BTreeMap<String, String>,
    #[serde(default)]
    pub numeric: BTreeMap<String, f64>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: f64) -> Self {
        Self {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
            categorical: BTreeMap::new(),
            numeric: BTreeMap::new(),
        }
    }

    pub fn with_categorical(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.categorical.insert(name.into(), value.into());
        self
    }

    pub fn with_numeric(mut self, name: impl Into<String>, value: f64) -> Self {
        self.numeric.insert(name.into(), value);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.activity.is_empty() {
            return Err(LogError::Data(format!("case {}: empty activity", self.case_id)));
        }
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(LogError::Data(format!(
                "case {}: invalid timestamp {}",
                self.case_id, self.timestamp
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
    #[serde(default)]
    case_attributes: BTreeMap<String, AttrValue>,
    /// `true` when the case ended with the undesired outcome.
    outcome: bool,
}

impl Trace {
    pub fn new(
        case_id: impl Into<String>,
        events: Vec<Event>,
        case_attributes: BTreeMap<String, AttrValue>,
        outcome: bool,
    ) -> Result<Self> {
        let case_id = case_id.into();
        if events.is_empty() {
            return Err(LogError::Data(format!("case {case_id}: trace has no events")));
        }
        for event in &events {
            event.validate()?;
        }
        if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(LogError::Data(format!(
                "case {case_id}: timestamps decrease along the trace"
            )));
        }
        Ok(Self {
            case_id,
            events,
            case_attributes,
            outcome,
        })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn case_attributes(&self) -> &BTreeMap<String, AttrValue> {
        &self.case_attributes
    }

    pub fn outcome(&self) -> bool {
        self.outcome
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Always false; traces are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.events[0].timestamp
    }

    pub fn end_time(&self) -> f64 {
        self.events[self.events.len() - 1].timestamp
    }

    /// Keeps the first `len` events. Returns `None` when nothing is left.
    fn truncated(&self, len: usize) -> Option<Self> {
        if len == 0 {
            return None;
        }
        let mut out = self.clone();
        out.events.truncate(len);
        Some(out)
    }

    fn with_events(&self, events: Vec<Event>) -> Option<Self> {
        if events.is_empty() {
            return None;
        }
        Some(Self {
            events,
            ..self.clone()
        })
    }
}

/// The first `k` events of a trace.
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    trace: &'a Trace,
    k: usize,
}

impl<'a> Prefix<'a> {
    pub fn trace(&self) -> &'a Trace {
        self.trace
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn events(&self) -> &'a [Event] {
        &self.trace.events[..self.k]
    }

    /// Events after the prefix; the prefix followed by the suffix is the full trace.
    pub fn suffix(&self) -> &'a [Event] {
        &self.trace.events[self.k..]
    }

    pub fn last_event(&self) -> &'a Event {
        &self.trace.events[self.k - 1]
    }
}

/// `hd^k(trace)`, for `1 <= k <= |trace|`.
pub fn prefix(trace: &Trace, k: usize) -> Result<Prefix<'_>> {
    if k == 0 || k > trace.len() {
        return Err(LogError::PrefixOutOfRange { k, len: trace.len() });
    }
    Ok(Prefix { trace, k })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for trace in &traces {
            if !seen.insert(trace.case_id.as_str()) {
                return Err(LogError::Data(format!("duplicate case id {}", trace.case_id)));
            }
        }
        Ok(Self { traces })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trace> {
        self.traces.iter()
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.traces.iter().map(|t| t.case_id.as_str())
    }

    pub fn n_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn stats(&self) -> LogStats {
        let mut lengths: Vec<usize> = self.traces.iter().map(Trace::len).collect();
        lengths.sort_unstable();
        let undesired = self.traces.iter().filter(|t| t.outcome).count();
        LogStats {
            n_traces: self.len(),
            class_ratio: if self.is_empty() {
                0.0
            } else {
                undesired as f64 / self.len() as f64
            },
            min_length: lengths.first().copied().unwrap_or(0),
            median_length: nearest_rank(&lengths, 50.0).unwrap_or(0),
            max_length: lengths.last().copied().unwrap_or(0),
            n_events: lengths.iter().sum(),
        }
    }

    // Traces built by the transforms below keep their case ids, so uniqueness holds.
    fn from_unique(traces: Vec<Trace>) -> Self {
        Self { traces }
    }
}

impl<'a> IntoIterator for &'a EventLog {
    type Item = &'a Trace;
    type IntoIter = std::slice::Iter<'a, Trace>;

    fn into_iter(self) -> Self::IntoIter {
        self.traces.iter()
    }
}

/// Summary statistics of a log, in the shape of a dataset table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub n_traces: usize,
    pub class_ratio: f64,
    pub min_length: usize,
    pub median_length: usize,
    pub max_length: usize,
    pub n_events: usize,
}

// ---------------------------------------------------------------------------
// CSV input
// ---------------------------------------------------------------------------

fn default_delimiter() -> char {
    ','
}

fn default_pos_label() -> String {
    "1".to_string()
}

/// Column roles of a CSV event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSchema {
    pub case_id_col: String,
    pub activity_col: String,
    pub timestamp_col: String,
    pub label_col: String,
    #[serde(default)]
    pub cat_event_cols: Vec<String>,
    #[serde(default)]
    pub num_event_cols: Vec<String>,
    #[serde(default)]
    pub cat_case_cols: Vec<String>,
    #[serde(default)]
    pub num_case_cols: Vec<String>,
    /// Value of the label column marking the undesired outcome.
    #[serde(default = "default_pos_label")]
    pub pos_label_value: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

impl LogSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LogError::Schema(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes to toml")
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .map_err(|_| LogError::Schema(format!("delimiter {:?} is not ASCII", self.delimiter)))
    }
}

/// Parses an ISO-8601 date/time or an integer/decimal number of epoch seconds.
/// Naive date-times are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if let Ok(secs) = raw.parse::<f64>() {
        return (secs.is_finite() && secs >= 0.0).then_some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp_millis() as f64 / 1000.0);
    }
    const NAIVE_FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y/%m/%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ];
    for fmt in NAIVE_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp_millis() as f64 / 1000.0);
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(date.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
    }
    None
}

struct CaseBuilder {
    order: usize,
    rows: Vec<(usize, Event)>,
    case_attributes: BTreeMap<String, AttrValue>,
    outcome: bool,
}

/// Reads a CSV event log. Events are grouped by case id and sorted by timestamp,
/// keeping input order on ties. Traces appear in order of their first row.
/// Empty cells are treated as missing attributes.
pub fn parse_log<R: Read>(source: R, schema: &LogSchema) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::Schema(format!("missing column {name:?}")))
    };
    let case_col = column(&schema.case_id_col)?;
    let activity_col = column(&schema.activity_col)?;
    let ts_col = column(&schema.timestamp_col)?;
    let label_col = column(&schema.label_col)?;
    let resolve = |cols: &[String]| -> Result<Vec<(String, usize)>> {
        cols.iter().map(|c| Ok((c.clone(), column(c)?))).collect()
    };
    let cat_event = resolve(&schema.cat_event_cols)?;
    let num_event = resolve(&schema.num_event_cols)?;
    let cat_case = resolve(&schema.cat_case_cols)?;
    let num_case = resolve(&schema.num_case_cols)?;

    let mut cases: HashMap<String, CaseBuilder> = HashMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row_idx as u64 + 2, |p| p.line());
        let row_err = |message: String| LogError::Row { line, message };
        let field = |idx: usize| record.get(idx).unwrap_or("");

        let case_id = field(case_col).to_string();
        if case_id.is_empty() {
            return Err(row_err("empty case id".into()));
        }
        let activity = field(activity_col);
        if activity.is_empty() {
            return Err(row_err("empty activity".into()));
        }
        let raw_ts = field(ts_col);
        let timestamp = parse_timestamp(raw_ts)
            .ok_or_else(|| row_err(format!("unparseable timestamp {raw_ts:?}")))?;
        let outcome = field(label_col) == schema.pos_label_value;

        let mut event = Event::new(case_id.clone(), activity, timestamp);
        for (name, idx) in &cat_event {
            let value = field(*idx);
            if !value.is_empty() {
                event.categorical.insert(name.clone(), value.to_string());
            }
        }
        for (name, idx) in &num_event {
            if let Some(value) = parse_number(field(*idx)).map_err(&row_err)? {
                event.numeric.insert(name.clone(), value);
            }
        }

        let next_order = cases.len();
        let builder = cases.entry(case_id.clone()).or_insert_with(|| CaseBuilder {
            order: next_order,
            rows: Vec::new(),
            case_attributes: BTreeMap::new(),
            outcome,
        });
        if builder.outcome != outcome {
            return Err(LogError::Data(format!(
                "case {case_id}: conflicting outcome labels (line {line})"
            )));
        }
        for (name, idx) in &cat_case {
            let value = field(*idx);
            if !value.is_empty() && !builder.case_attributes.contains_key(name) {
                builder
                    .case_attributes
                    .insert(name.clone(), AttrValue::Label(value.to_string()));
            }
        }
        for (name, idx) in &num_case {
            if let Some(value) = parse_number(field(*idx)).map_err(&row_err)? {
                builder
                    .case_attributes
                    .entry(name.clone())
                    .or_insert(AttrValue::Real(value));
            }
        }
        let position = builder.rows.len();
        builder.rows.push((position, event));
    }

    let mut builders: Vec<(String, CaseBuilder)> = cases.into_iter().collect();
    builders.sort_by_key(|(_, b)| b.order);
    let traces = builders
        .into_iter()
        .map(|(case_id, mut b)| {
            // stable on ties: position breaks them
            b.rows.sort_by(|(pa, a), (pb, b)| {
                a.timestamp.total_cmp(&b.timestamp).then(pa.cmp(pb))
            });
            let events = b.rows.into_iter().map(|(_, e)| e).collect();
            Trace::new(case_id, events, b.case_attributes, b.outcome)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EventLog::from_unique(traces))
}

fn parse_number(raw: &str) -> std::result::Result<Option<f64>, String> {
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("unparseable number {raw:?}")),
    }
}

/// Writes a log in the layout [`parse_log`] reads back under the same schema.
/// Case attributes are repeated on every row.
pub fn write_log<W: Write>(log: &EventLog, schema: &LogSchema, sink: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .from_writer(sink);
    let mut header = vec![
        schema.case_id_col.clone(),
        schema.activity_col.clone(),
        schema.timestamp_col.clone(),
        schema.label_col.clone(),
    ];
    header.extend(schema.cat_event_cols.iter().cloned());
    header.extend(schema.num_event_cols.iter().cloned());
    header.extend(schema.cat_case_cols.iter().cloned());
    header.extend(schema.num_case_cols.iter().cloned());
    writer.write_record(&header)?;

    let neg_label = if schema.pos_label_value == "0" { "1" } else { "0" };
    for trace in log {
        let label = if trace.outcome {
            schema.pos_label_value.as_str()
        } else {
            neg_label
        };
        for event in &trace.events {
            let mut row = vec![
                trace.case_id.clone(),
                event.activity.clone(),
                format!("{}", event.timestamp),
                label.to_string(),
            ];
            for c in &schema.cat_event_cols {
                row.push(event.categorical.get(c).cloned().unwrap_or_default());
            }
            for c in &schema.num_event_cols {
                row.push(event.numeric.get(c).map(|v| format!("{v}")).unwrap_or_default());
            }
            for c in schema.cat_case_cols.iter().chain(&schema.num_case_cols) {
                row.push(match trace.case_attributes.get(c) {
                    Some(AttrValue::Label(s)) => s.clone(),
                    Some(AttrValue::Real(v)) => format!("{v}"),
                    None => String::new(),
                });
            }
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Nearest-rank percentile of a sorted slice: the value at rank `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[usize], percentile: f64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Cuts every trace longer than the `percentile`-th nearest-rank quantile of
/// trace lengths down to that length.
pub fn truncate_log(log: &EventLog, percentile: f64) -> Result<EventLog> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(LogError::InvalidArgument(format!(
            "percentile must be in (0, 100], got {percentile}"
        )));
    }
    let mut lengths: Vec<usize> = log.iter().map(Trace::len).collect();
    lengths.sort_unstable();
    let Some(max_len) = nearest_rank(&lengths, percentile) else {
        return Ok(EventLog::empty());
    };
    Ok(truncate_to(log, max_len))
}

/// Cuts every trace to at most `max_len` events.
pub fn truncate_to(log: &EventLog, max_len: usize) -> EventLog {
    EventLog::from_unique(
        log.iter()
            .filter_map(|t| t.truncated(t.len().min(max_len)))
            .collect(),
    )
}

/// Cuts each trace right before its first event whose activity reveals the outcome.
/// Traces left without events are dropped.
pub fn cut_trivially_known(log: &EventLog, trigger_rules: &[String]) -> EventLog {
    if trigger_rules.is_empty() {
        return log.clone();
    }
    let rules: BTreeSet<&str> = trigger_rules.iter().map(String::as_str).collect();
    EventLog::from_unique(
        log.iter()
            .filter_map(|t| {
                let cut = t
                    .events
                    .iter()
                    .position(|e| rules.contains(e.activity.as_str()))
                    .unwrap_or(t.len());
                t.truncated(cut)
            })
            .collect(),
    )
}

/// Value counts of categorical attributes, fitted on one log and applied to others.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryFolding {
    pub min_count: usize,
    pub event_counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub case_counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl CategoryFolding {
    /// Counts every non-reserved categorical value. Event attributes are counted per
    /// event, case attributes per trace.
    pub fn fit(log: &EventLog, min_count: usize) -> Self {
        let mut event_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        let mut case_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for trace in log {
            for event in &trace.events {
                for (name, value) in &event.categorical {
                    if !is_reserved(value) {
                        *event_counts
                            .entry(name.clone())
                            .or_default()
                            .entry(value.clone())
                            .or_default() += 1;
                    }
                }
            }
            for (name, value) in &trace.case_attributes {
                if let AttrValue::Label(value) = value {
                    if !is_reserved(value) {
                        *case_counts
                            .entry(name.clone())
                            .or_default()
                            .entry(value.clone())
                            .or_default() += 1;
                    }
                }
            }
        }
        Self {
            min_count,
            event_counts,
            case_counts,
        }
    }

    fn is_rare(
        &self,
        counts: &BTreeMap<String, BTreeMap<String, usize>>,
        attr: &str,
        value: &str,
    ) -> bool {
        if self.min_count == 0 || is_reserved(value) {
            return false;
        }
        let count = counts.get(attr).and_then(|m| m.get(value)).copied().unwrap_or(0);
        count < self.min_count
    }

    pub fn apply(&self, log: &EventLog) -> EventLog {
        if self.min_count == 0 {
            return log.clone();
        }
        let traces = log
            .iter()
            .map(|trace| {
                let mut trace = trace.clone();
                for event in &mut trace.events {
                    for (name, value) in event.categorical.iter_mut() {
                        if self.is_rare(&self.event_counts, name, value) {
                            *value = OTHER_LABEL.to_string();
                        }
                    }
                }
                for (name, value) in trace.case_attributes.iter_mut() {
                    if let AttrValue::Label(label) = value {
                        if self.is_rare(&self.case_counts, name, label) {
                            *label = OTHER_LABEL.to_string();
                        }
                    }
                }
                trace
            })
            .collect();
        EventLog::from_unique(traces)
    }
}

/// Replaces categorical values seen fewer than `min_count` times in `log` with
/// [`OTHER_LABEL`].
pub fn fold_rare_categories(log: &EventLog, min_count: usize) -> EventLog {
    CategoryFolding::fit(log, min_count).apply(log)
}

/// Carries the most recent value of each event attribute forward within a trace.
/// Attributes with no preceding value become `0` (numeric) or [`MISSING_LABEL`]
/// (categorical). Missing case attributes are filled the same way.
pub fn impute_missing(log: &EventLog) -> EventLog {
    let mut cat_names = BTreeSet::new();
    let mut num_names = BTreeSet::new();
    let mut case_cat = BTreeSet::new();
    let mut case_num = BTreeSet::new();
    for trace in log {
        for event in &trace.events {
            cat_names.extend(event.categorical.keys().cloned());
            num_names.extend(event.numeric.keys().cloned());
        }
        for (name, value) in &trace.case_attributes {
            match value {
                AttrValue::Label(_) => case_cat.insert(name.clone()),
                AttrValue::Real(_) => case_num.insert(name.clone()),
            };
        }
    }
    let traces = log
        .iter()
        .map(|trace| {
            let mut trace = trace.clone();
            let mut last_cat: BTreeMap<&String, String> = BTreeMap::new();
            let mut last_num: BTreeMap<&String, f64> = BTreeMap::new();
            for event in &mut trace.events {
                for name in &cat_names {
                    match event.categorical.get(name) {
                        Some(v) => {
                            last_cat.insert(name, v.clone());
                        }
                        None => {
                            let fill = last_cat
                                .get(name)
                                .cloned()
                                .unwrap_or_else(|| MISSING_LABEL.to_string());
                            event.categorical.insert(name.clone(), fill);
                        }
                    }
                }
                for name in &num_names {
                    match event.numeric.get(name) {
                        Some(v) => {
                            last_num.insert(name, *v);
                        }
                        None => {
                            let fill = last_num.get(name).copied().unwrap_or(0.0);
                            event.numeric.insert(name.clone(), fill);
                        }
                    }
                }
            }
            for name in &case_cat {
                trace
                    .case_attributes
                    .entry(name.clone())
                    .or_insert_with(|| AttrValue::Label(MISSING_LABEL.to_string()));
            }
            for name in &case_num {
                trace
                    .case_attributes
                    .entry(name.clone())
                    .or_insert(AttrValue::Real(0.0));
            }
            trace
        })
        .collect();
    EventLog::from_unique(traces)
}

// ---------------------------------------------------------------------------
// Temporal split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub thres: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.64,
            thres: 0.16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLogs {
    pub train: EventLog,
    pub thres: EventLog,
    pub test: EventLog,
    /// Earliest start time among test cases; train/thres events at or after it were discarded.
    pub test_start: f64,
    /// Non-fatal problems such as partitions left empty by the overlap discard.
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Orders cases by start time, shuffles the earliest `train + thres` share into
/// training and thresholding logs, and keeps the rest as the test log. Events of
/// training/thresholding cases at or after the first test start are discarded.
pub fn temporal_split(log: &EventLog, fractions: SplitFractions, seed: u64) -> Result<SplitLogs> {
    let SplitFractions { train, thres } = fractions;
    if !(train > 0.0 && thres > 0.0 && train + thres < 1.0) {
        return Err(LogError::Split(format!(
            "fractions must be positive with sum < 1, got train={train} thres={thres}"
        )));
    }
    let n = log.len();
    if n < 3 {
        return Err(LogError::Split(format!("need at least 3 cases, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| log.traces[a].start_time().total_cmp(&log.traces[b].start_time()));

    let n_train = ((n as f64) * train).round() as usize;
    let n_thres = ((n as f64) * thres).round() as usize;
    let n_pool = (n_train + n_thres).min(n - 1);
    let n_train = n_train.min(n_pool);

    let (pool, test_idx) = order.split_at(n_pool);
    let mut pool = pool.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let (train_idx, thres_idx) = pool.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut thres_idx = thres_idx.to_vec();
    // restore chronological order inside each partition
    let rank: HashMap<usize, usize> = order.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    train_idx.sort_by_key(|i| rank[i]);
    thres_idx.sort_by_key(|i| rank[i]);

    let test_start = log.traces[test_idx[0]].start_time();
    let discard = |idx: &[usize]| -> EventLog {
        EventLog::from_unique(
            idx.iter()
                .filter_map(|&i| {
                    let t = &log.traces[i];
                    let kept: Vec<Event> = t
                        .events
                        .iter()
                        .filter(|e| e.timestamp < test_start)
                        .cloned()
                        .collect();
                    t.with_events(kept)
                })
                .collect(),
        )
    };
    let train_log = discard(&train_idx);
    let thres_log = discard(&thres_idx);
    let test_log = EventLog::from_unique(test_idx.iter().map(|&i| log.traces[i].clone()).collect());

    let mut warnings = Vec::new();
    for (name, part) in [("train", &train_log), ("thres", &thres_log), ("test", &test_log)] {
        if part.is_empty() {
            warnings.push(format!("{name} partition is empty after overlap discard"));
        }
    }
    Ok(SplitLogs {
        train: train_log,
        thres: thres_log,
        test: test_log,
        test_start,
        warnings,
    })
}
