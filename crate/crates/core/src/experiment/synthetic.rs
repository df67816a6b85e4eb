//! Seeded synthetic event logs with a tunable amount of outcome signal.
//!
//! Each case draws its outcome first. Activities then come from a mixture of a
//! uniform distribution (weight `1 - signal`) and an outcome-specific preference
//! over half of the activity alphabet (weight `signal`), so `signal = 0` makes
//! outcome and control flow independent and `signal = 1` reveals the outcome from
//! the first event. The per-event `amount` carries a weaker copy of the signal;
//! `resource` and the case attribute `channel` are noise.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::event_log::{AttrValue, Event, EventLog, LogSchema, Trace};

use super::{ExperimentError, Result};

const START_EPOCH: f64 = 1_600_000_000.0;
const MEAN_INTERARRIVAL_SECS: f64 = 3_600.0;
const MEAN_EVENT_GAP_SECS: f64 = 900.0;
const N_RESOURCES: usize = 5;
const CHANNELS: [&str; 3] = ["web", "phone", "branch"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_cases: usize,
    /// Fraction of cases with the undesired outcome.
    pub class_ratio: f64,
    pub min_length: usize,
    pub median_length: usize,
    pub max_length: usize,
    /// In `[0, 1]`; 0 gives no learnable signal.
    pub signal_strength: f64,
    #[serde(default = "default_activities")]
    pub n_activities: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_activities() -> usize {
    8
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_cases: 2_000,
            class_ratio: 0.45,
            min_length: 2,
            median_length: 6,
            max_length: 12,
            signal_strength: 0.5,
            n_activities: default_activities(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::Generate(msg));
        if self.n_cases == 0 {
            return bad("n_cases must be positive".into());
        }
        if !(self.class_ratio > 0.0 && self.class_ratio < 1.0) {
            return bad(format!("class_ratio must be in (0, 1), got {}", self.class_ratio));
        }
        if self.min_length < 2 {
            return bad(format!("min_length must be at least 2, got {}", self.min_length));
        }
        if !(self.min_length <= self.median_length && self.median_length <= self.max_length) {
            return bad(format!(
                "lengths must satisfy min <= median <= max, got {}/{}/{}",
                self.min_length, self.median_length, self.max_length
            ));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal_strength must be in [0, 1], got {}", self.signal_strength));
        }
        if self.n_activities < 2 {
            return bad("n_activities must be at least 2".into());
        }
        Ok(())
    }
}

/// Column layout of generated logs when written as CSV.
pub fn synthetic_schema() -> LogSchema {
    LogSchema {
        case_id_col: "case_id".into(),
        activity_col: "activity".into(),
        timestamp_col: "timestamp".into(),
        label_col: "label".into(),
        cat_event_cols: vec!["resource".into()],
        num_event_cols: vec!["amount".into()],
        cat_case_cols: vec!["channel".into()],
        num_case_cols: Vec::new(),
        pos_label_value: "1".into(),
        delimiter: ',',
    }
}

fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    -mean * (1.0 - rng.gen::<f64>()).ln()
}

/// Half the draws fall in `[min, median]`, half in `[median, max]`.
fn draw_length(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> usize {
    if rng.gen_bool(0.5) {
        rng.gen_range(spec.min_length..=spec.median_length)
    } else {
        rng.gen_range(spec.median_length..=spec.max_length)
    }
}

fn activity_weights(spec: &SyntheticSpec, undesired: bool) -> Vec<f64> {
    let n = spec.n_activities;
    let parity = usize::from(!undesired);
    let preferred = (0..n).filter(|a| a % 2 == parity).count() as f64;
    (0..n)
        .map(|a| {
            let pref = if a % 2 == parity { 1.0 / preferred } else { 0.0 };
            (1.0 - spec.signal_strength) / n as f64 + spec.signal_strength * pref
        })
        .collect()
}

/// Generates a log with exactly `round(n_cases * class_ratio)` undesired cases.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EventLog> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_undesired = (spec.n_cases as f64 * spec.class_ratio).round() as usize;
    let mut outcomes: Vec<bool> = (0..spec.n_cases).map(|i| i < n_undesired).collect();
    outcomes.shuffle(&mut rng);

    let names: Vec<String> = (0..spec.n_activities).map(|a| format!("act_{a:02}")).collect();
    let undesired_mix = WeightedIndex::new(activity_weights(spec, true)).expect("positive weights");
    let desired_mix = WeightedIndex::new(activity_weights(spec, false)).expect("positive weights");

    let mut traces = Vec::with_capacity(spec.n_cases);
    let mut start = START_EPOCH;
    for (i, &undesired) in outcomes.iter().enumerate() {
        start += exponential(&mut rng, MEAN_INTERARRIVAL_SECS).round();
        let case_id = format!("case_{i:06}");
        let length = draw_length(&mut rng, spec);
        let mix = if undesired { &undesired_mix } else { &desired_mix };
        let amount_mean = 100.0 * (1.0 + if undesired { spec.signal_strength } else { 0.0 });

        let mut t = start;
        let mut events = Vec::with_capacity(length);
        for j in 0..length {
            if j > 0 {
                t += exponential(&mut rng, MEAN_EVENT_GAP_SECS).round().max(1.0);
            }
            let activity = &names[mix.sample(&mut rng)];
            let resource = format!("r{}", rng.gen_range(0..N_RESOURCES));
            let amount = (exponential(&mut rng, amount_mean) * 100.0).round() / 100.0;
            events.push(
                Event::new(case_id.clone(), activity.clone(), t)
                    .with_categorical("resource", resource)
                    .with_numeric("amount", amount),
            );
        }
        let channel = CHANNELS.choose(&mut rng).expect("non-empty");
        let attrs = BTreeMap::from([("channel".to_string(), AttrValue::Label(channel.to_string()))]);
        traces.push(
            Trace::new(case_id, events, attrs, undesired).map_err(|e| ExperimentError::Generate(e.to_string()))?,
        );
    }
    EventLog::new(traces).map_err(|e| ExperimentError::Generate(e.to_string()))
}
