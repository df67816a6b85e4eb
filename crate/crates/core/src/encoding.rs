//! Aggregation encoding of trace prefixes.
//!
//! A prefix becomes a fixed-width vector laid out as:
//!
//! 1. activity occurrence counts, one per activity in the alphabet;
//! 2. occurrence counts of every categorical event-attribute value;
//! 3. `min`, `max`, `mean`, `sum`, `std` of every numeric event attribute;
//! 4. case attributes: one-hot for categoricals, the raw value for numerics;
//! 5. derived features: event number, hour/weekday/month (UTC) of the last event,
//!    time since case start and time since the previous event, in seconds.
//!
//! Alphabets are sorted lexicographically, so the layout depends only on the
//! training log. Values outside the alphabets contribute nothing.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{AttrValue, EventLog, Prefix};

pub const NUMERIC_AGGREGATES: [&str; 5] = ["min", "max", "mean", "sum", "std"];
pub const DERIVED_FEATURES: [&str; 6] = [
    "event_number",
    "hour",
    "weekday",
    "month",
    "time_since_case_start",
    "time_since_last_event",
];

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("cannot fit an encoding schema on an empty log")]
    EmptyLog,
    #[error("schema feature names do not match its layout ({names} names, {width} features)")]
    LayoutMismatch { names: usize, width: usize },
    #[error("schema file: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    pub activities: Vec<String>,
    pub event_categories: BTreeMap<String, Vec<String>>,
    pub event_numeric: Vec<String>,
    pub case_categories: BTreeMap<String, Vec<String>>,
    pub case_numeric: Vec<String>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Collects alphabets from a (preprocessed) training log.
pub fn fit_schema(train_log: &EventLog) -> Result<EncodingSchema, EncodingError> {
    if train_log.is_empty() {
        return Err(EncodingError::EmptyLog);
    }
    let mut activities = BTreeSet::new();
    let mut event_categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut event_numeric = BTreeSet::new();
    let mut case_categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut case_numeric = BTreeSet::new();
    for trace in train_log {
        for event in trace.events() {
            activities.insert(event.activity.clone());
            for (name, value) in &event.categorical {
                event_categories
                    .entry(name.clone())
                    .or_default()
                    .insert(value.clone());
            }
            event_numeric.extend(event.numeric.keys().cloned());
        }
        for (name, value) in trace.case_attributes() {
            match value {
                AttrValue::Label(label) => {
                    case_categories
                        .entry(name.clone())
                        .or_default()
                        .insert(label.clone());
                }
                AttrValue::Real(_) => {
                    case_numeric.insert(name.clone());
                }
            }
        }
    }
    let to_vecs = |m: BTreeMap<String, BTreeSet<String>>| {
        m.into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect::<BTreeMap<_, Vec<_>>>()
    };
    let mut schema = EncodingSchema {
        activities: activities.into_iter().collect(),
        event_categories: to_vecs(event_categories),
        event_numeric: event_numeric.into_iter().collect(),
        case_categories: to_vecs(case_categories),
        case_numeric: case_numeric.into_iter().collect(),
        feature_names: Vec::new(),
    };
    schema.feature_names = schema.layout();
    Ok(schema)
}

impl EncodingSchema {
    fn layout(&self) -> Vec<String> {
        let mut names = Vec::new();
        names.extend(self.activities.iter().map(|a| format!("activity={a}")));
        for (attr, values) in &self.event_categories {
            names.extend(values.iter().map(|v| format!("{attr}={v}")));
        }
        for attr in &self.event_numeric {
            names.extend(NUMERIC_AGGREGATES.iter().map(|agg| format!("{attr}_{agg}")));
        }
        for (attr, values) in &self.case_categories {
            names.extend(values.iter().map(|v| format!("case:{attr}={v}")));
        }
        names.extend(self.case_numeric.iter().map(|a| format!("case:{a}")));
        names.extend(DERIVED_FEATURES.iter().map(|d| d.to_string()));
        names
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EncodingError> {
        let schema: Self = serde_json::from_str(text)?;
        let layout = schema.layout();
        if layout != schema.feature_names {
            return Err(EncodingError::LayoutMismatch {
                names: schema.feature_names.len(),
                width: layout.len(),
            });
        }
        Ok(schema)
    }

    pub fn encode(&self, prefix: &Prefix<'_>) -> FeatureVector {
        let mut out = Vec::with_capacity(self.width());
        self.encode_into(prefix, &mut out);
        FeatureVector(out)
    }

    /// Appends the encoding of `prefix` to `out`.
    pub fn encode_into(&self, prefix: &Prefix<'_>, out: &mut Vec<f64>) {
        let start = out.len();
        let events = prefix.events();

        let base = out.len();
        out.resize(base + self.activities.len(), 0.0);
        for event in events {
            if let Ok(i) = self.activities.binary_search(&event.activity) {
                out[base + i] += 1.0;
            }
        }

        for (attr, values) in &self.event_categories {
            let base = out.len();
            out.resize(base + values.len(), 0.0);
            for event in events {
                if let Some(value) = event.categorical.get(attr) {
                    if let Ok(i) = values.binary_search(value) {
                        out[base + i] += 1.0;
                    }
                }
            }
        }

        for attr in &self.event_numeric {
            let observed: Vec<f64> = events.iter().filter_map(|e| e.numeric.get(attr).copied()).collect();
            out.extend_from_slice(&aggregate(&observed));
        }

        for (attr, values) in &self.case_categories {
            let base = out.len();
            out.resize(base + values.len(), 0.0);
            if let Some(AttrValue::Label(label)) = prefix.trace().case_attributes().get(attr) {
                if let Ok(i) = values.binary_search(label) {
                    out[base + i] = 1.0;
                }
            }
        }
        for attr in &self.case_numeric {
            let value = match prefix.trace().case_attributes().get(attr) {
                Some(AttrValue::Real(v)) => *v,
                _ => 0.0,
            };
            out.push(value);
        }

        let last = prefix.last_event();
        let first = &events[0];
        let previous = if events.len() > 1 { &events[events.len() - 2] } else { last };
        let (hour, weekday, month) = calendar(last.timestamp);
        out.extend_from_slice(&[
            prefix.k() as f64,
            hour,
            weekday,
            month,
            last.timestamp - first.timestamp,
            last.timestamp - previous.timestamp,
        ]);

        // overflowed aggregates would poison training
        for v in &mut out[start..] {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        debug_assert_eq!(out.len() - start, self.width());
    }
}

/// `[min, max, mean, sum, population std]`; all zero when nothing was observed.
fn aggregate(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0; 5];
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    [min, max, mean, sum, var.sqrt()]
}

/// Hour (0-23), weekday (0 = Monday) and month (1-12) in UTC.
fn calendar(timestamp: f64) -> (f64, f64, f64) {
    match DateTime::from_timestamp(timestamp.floor() as i64, 0) {
        Some(dt) => (
            dt.hour() as f64,
            dt.weekday().num_days_from_monday() as f64,
            dt.month() as f64,
        ),
        None => (0.0, 0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{prefix, Event, Trace};

    fn log_with(events: Vec<Event>, case: BTreeMap<String, AttrValue>) -> EventLog {
        EventLog::new(vec![Trace::new("c", events, case, true).unwrap()]).unwrap()
    }

    fn position(schema: &EncodingSchema, name: &str) -> usize {
        schema.feature_names.iter().position(|n| n == name).unwrap()
    }

    #[test]
    fn activity_block_counts() {
        let events = ["a", "b", "a"]
            .iter()
            .enumerate()
            .map(|(i, a)| Event::new("c", *a, i as f64))
            .collect();
        let log = log_with(events, BTreeMap::new());
        let schema = fit_schema(&log).unwrap();
        assert_eq!(schema.activities, ["a", "b"]);
        assert_eq!(schema.width(), 2 + DERIVED_FEATURES.len());
        let v = schema.encode(&prefix(&log.traces()[0], 3).unwrap());
        assert_eq!(&v.0[..2], &[2.0, 1.0]);
        assert_eq!(v.0[position(&schema, "event_number")], 3.0);
    }

    #[test]
    fn numeric_aggregates() {
        let events = vec![
            Event::new("c", "a", 0.0).with_numeric("x", 3.0),
            Event::new("c", "a", 1.0).with_numeric("x", 5.0),
        ];
        let log = log_with(events, BTreeMap::new());
        let schema = fit_schema(&log).unwrap();
        assert_eq!(schema.width(), 1 + 5 + DERIVED_FEATURES.len());
        let v = schema.encode(&prefix(&log.traces()[0], 2).unwrap());
        let base = position(&schema, "x_min");
        assert_eq!(&v.0[base..base + 5], &[3.0, 5.0, 4.0, 8.0, 1.0]);
        let single = schema.encode(&prefix(&log.traces()[0], 1).unwrap());
        assert_eq!(&single.0[base..base + 5], &[3.0, 3.0, 3.0, 3.0, 0.0]);
    }

    #[test]
    fn first_event_time_features_are_zero() {
        let events = vec![Event::new("c", "a", 1_000.0), Event::new("c", "b", 1_600.0)];
        let log = log_with(events, BTreeMap::new());
        let schema = fit_schema(&log).unwrap();
        let t = &log.traces()[0];
        let v1 = schema.encode(&prefix(t, 1).unwrap());
        assert_eq!(v1.0[position(&schema, "time_since_case_start")], 0.0);
        assert_eq!(v1.0[position(&schema, "time_since_last_event")], 0.0);
        let v2 = schema.encode(&prefix(t, 2).unwrap());
        assert_eq!(v2.0[position(&schema, "time_since_case_start")], 600.0);
        assert_eq!(v2.0[position(&schema, "time_since_last_event")], 600.0);
    }

    #[test]
    fn calendar_in_utc() {
        // 2021-03-05T13:00:00Z, a Friday
        let (h, w, m) = calendar(1_614_949_200.0);
        assert_eq!((h, w, m), (13.0, 4.0, 3.0));
    }

    #[test]
    fn unseen_values_are_ignored() {
        let train = log_with(
            vec![Event::new("c", "a", 0.0).with_categorical("r", "u")],
            BTreeMap::from([("channel".to_string(), AttrValue::Label("web".into()))]),
        );
        let schema = fit_schema(&train).unwrap();
        let other = log_with(
            vec![
                Event::new("c", "zzz", 0.0).with_categorical("r", "never-seen"),
                Event::new("c", "a", 1.0).with_categorical("r", "u"),
            ],
            BTreeMap::from([("channel".to_string(), AttrValue::Label("phone".into()))]),
        );
        let v = schema.encode(&prefix(&other.traces()[0], 2).unwrap());
        assert_eq!(v.0[position(&schema, "activity=a")], 1.0);
        assert_eq!(v.0[position(&schema, "r=u")], 1.0);
        assert_eq!(v.0[position(&schema, "case:channel=web")], 0.0);
        assert_eq!(v.len(), schema.width());
    }

    #[test]
    fn case_attributes_block() {
        let case = BTreeMap::from([
            ("channel".to_string(), AttrValue::Label("web".into())),
            ("amount".to_string(), AttrValue::Real(12.5)),
        ]);
        let log = log_with(vec![Event::new("c", "a", 0.0)], case);
        let schema = fit_schema(&log).unwrap();
        let v = schema.encode(&prefix(&log.traces()[0], 1).unwrap());
        assert_eq!(v.0[position(&schema, "case:channel=web")], 1.0);
        assert_eq!(v.0[position(&schema, "case:amount")], 12.5);
    }

    #[test]
    fn empty_log_rejected() {
        assert!(matches!(fit_schema(&EventLog::empty()), Err(EncodingError::EmptyLog)));
    }

    #[test]
    fn schema_json_round_trip() {
        let log = log_with(
            vec![Event::new("c", "a", 0.0).with_numeric("x", 1.0).with_categorical("r", "u")],
            BTreeMap::new(),
        );
        let schema = fit_schema(&log).unwrap();
        assert_eq!(EncodingSchema::from_json(&schema.to_json()).unwrap(), schema);
        let mut broken = schema.clone();
        broken.feature_names.pop();
        assert!(EncodingSchema::from_json(&broken.to_json()).is_err());
    }
}
