//! Alarm decisions, per-case costs, log costs and return on investment.
//!
//! Alarms are only considered on proper prefixes `hd^k`, `1 <= k <= |trace| - 1`,
//! and at most once per case: the alarm index is the first such `k` whose
//! likelihood reaches the policy threshold, or 0 when no alarm is raised.
//! Single-event traces can therefore never be alarmed.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{ConstantCosts, CostError, CostModel};
use crate::estimator::OutcomeEstimator;
use crate::event_log::{prefix, EventLog, Trace};

#[derive(Debug, Error)]
pub enum AlarmError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("prediction cache covers {cached} traces, log has {log}")]
    CacheMismatch { cached: usize, log: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AlarmError>;

/// When to raise an alarm, given the likelihood of the current prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlarmPolicy {
    Never,
    /// Alarm after the first event of every case that has a proper prefix.
    Always,
    /// Alarm when the likelihood is at least `tau`.
    Global { tau: f64 },
    /// Threshold per prefix length; `None` means never alarm at that length.
    /// Lengths not listed use `default`.
    PerLength {
        thresholds: BTreeMap<usize, Option<f64>>,
        default: Option<f64>,
    },
}

impl AlarmPolicy {
    pub fn global(tau: f64) -> Self {
        AlarmPolicy::Global { tau }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |tau: f64| {
            if (0.0..=1.0).contains(&tau) {
                Ok(())
            } else {
                Err(AlarmError::InvalidPolicy(format!("threshold {tau} outside [0, 1]")))
            }
        };
        match self {
            AlarmPolicy::Never | AlarmPolicy::Always => Ok(()),
            AlarmPolicy::Global { tau } => check(*tau),
            AlarmPolicy::PerLength { thresholds, default } => {
                thresholds.values().chain(std::iter::once(default)).flatten().try_for_each(|t| check(*t))
            }
        }
    }

    /// Whether the policy alarms on a prefix of length `k` with the given likelihood.
    pub fn fires(&self, k: usize, likelihood: f64) -> bool {
        match self {
            AlarmPolicy::Never => false,
            AlarmPolicy::Always => true,
            AlarmPolicy::Global { tau } => likelihood >= *tau,
            AlarmPolicy::PerLength { thresholds, default } => {
                match thresholds.get(&k).copied().unwrap_or(*default) {
                    Some(tau) => likelihood >= tau,
                    None => false,
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            AlarmPolicy::Never => "never".into(),
            AlarmPolicy::Always => "always".into(),
            AlarmPolicy::Global { tau } => format!("tau={tau}"),
            AlarmPolicy::PerLength { thresholds, .. } => format!("per_length({} lengths)", thresholds.len()),
        }
    }
}

/// Likelihoods of every proper prefix of every trace in a log, computed once.
/// `scores[i][k - 1]` belongs to `hd^k` of trace `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCache {
    scores: Vec<Vec<f64>>,
}

impl PredictionCache {
    pub fn build<E: OutcomeEstimator + ?Sized>(log: &EventLog, estimator: &E) -> Self {
        let scores = log
            .traces()
            .par_iter()
            .map(|trace| {
                (1..trace.len())
                    .map(|k| estimator.likelihood(&prefix(trace, k).expect("proper prefix")))
                    .collect()
            })
            .collect();
        Self { scores }
    }

    pub fn from_scores(scores: Vec<Vec<f64>>) -> Self {
        Self { scores }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn trace_scores(&self, trace_idx: usize) -> &[f64] {
        &self.scores[trace_idx]
    }

    pub fn all_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().flatten().copied()
    }

    fn check(&self, log: &EventLog) -> Result<()> {
        if self.scores.len() != log.len() {
            return Err(AlarmError::CacheMismatch {
                cached: self.scores.len(),
                log: log.len(),
            });
        }
        Ok(())
    }
}

/// Alarm index from the likelihoods of `hd^1 .. hd^(n-1)`.
pub fn alarm_index_from_scores(scores: &[f64], policy: &AlarmPolicy) -> usize {
    scores
        .iter()
        .enumerate()
        .find(|(i, &p)| policy.fires(i + 1, p))
        .map_or(0, |(i, _)| i + 1)
}

/// First `k` in `1..|trace|` where the policy alarms, or 0. Stops predicting at the
/// first alarm.
pub fn alarm_index<E: OutcomeEstimator + ?Sized>(trace: &Trace, estimator: &E, policy: &AlarmPolicy) -> usize {
    match policy {
        AlarmPolicy::Never => 0,
        AlarmPolicy::Always => usize::from(trace.len() > 1),
        _ => (1..trace.len())
            .find(|&k| policy.fires(k, estimator.likelihood(&prefix(trace, k).expect("proper prefix"))))
            .unwrap_or(0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCostRecord {
    pub case_id: String,
    pub alarm_index: usize,
    /// `true` for the undesired outcome.
    pub outcome: bool,
    pub cost: f64,
    pub intervention: f64,
    pub residual_outcome: f64,
    pub compensation: f64,
}

/// Cost of one case given where (if anywhere) the alarm was raised:
///
/// | | undesired | desired |
/// |---|---|---|
/// | alarm at `i` | `c_in(i) + (1 - eff(i)) c_out` | `c_in(i) + c_com` |
/// | no alarm | `c_out` | `0` |
pub fn case_cost(trace: &Trace, log: &EventLog, cost_model: &CostModel, alarm_index: usize) -> Result<CaseCostRecord> {
    let (intervention, residual_outcome, compensation) = match (trace.outcome(), alarm_index > 0) {
        (true, true) => {
            let eff = cost_model.eff(alarm_index, trace, log)?;
            (
                cost_model.c_in(alarm_index, trace, log)?,
                (1.0 - eff) * cost_model.c_out(trace, log)?,
                0.0,
            )
        }
        (false, true) => (cost_model.c_in(alarm_index, trace, log)?, 0.0, cost_model.c_com(trace, log)?),
        (true, false) => (0.0, cost_model.c_out(trace, log)?, 0.0),
        (false, false) => (0.0, 0.0, 0.0),
    };
    Ok(CaseCostRecord {
        case_id: trace.case_id().to_string(),
        alarm_index,
        outcome: trace.outcome(),
        cost: intervention + residual_outcome + compensation,
        intervention,
        residual_outcome,
        compensation,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub undesired_alarmed: usize,
    pub desired_alarmed: usize,
    pub undesired_not_alarmed: usize,
    pub desired_not_alarmed: usize,
}

impl PartitionCounts {
    pub fn total(&self) -> usize {
        self.undesired_alarmed + self.desired_alarmed + self.undesired_not_alarmed + self.desired_not_alarmed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub n_cases: usize,
    pub total_cost: f64,
    pub avg_cost: f64,
    pub as_is_cost: f64,
    pub as_is_avg_cost: f64,
    /// `as_is_cost - total_cost`.
    pub roi: f64,
    /// `roi / n_cases`: reduction in average cost per case.
    pub benefit: f64,
    pub counts: PartitionCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub records: Vec<CaseCostRecord>,
    pub summary: CostSummary,
}

impl CostReport {
    /// Builds the report from records and the as-is cost; sums run in record order.
    pub fn from_records(records: Vec<CaseCostRecord>, as_is_cost: f64) -> Self {
        let n = records.len();
        let mut total = 0.0;
        let mut counts = PartitionCounts::default();
        for r in &records {
            total += r.cost;
            match (r.outcome, r.alarm_index > 0) {
                (true, true) => counts.undesired_alarmed += 1,
                (false, true) => counts.desired_alarmed += 1,
                (true, false) => counts.undesired_not_alarmed += 1,
                (false, false) => counts.desired_not_alarmed += 1,
            }
        }
        let per_case = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
        let roi = as_is_cost - total;
        Self {
            records,
            summary: CostSummary {
                n_cases: n,
                total_cost: total,
                avg_cost: per_case(total),
                as_is_cost,
                as_is_avg_cost: per_case(as_is_cost),
                roi,
                benefit: per_case(roi),
                counts,
            },
        }
    }

    pub fn write_cases_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        for r in &self.records {
            writer.serialize(r)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Cost of the log when no alarm is ever raised: the sum of `c_out` over
/// undesired cases.
pub fn as_is_cost(log: &EventLog, cost_model: &CostModel) -> Result<f64> {
    let mut total = 0.0;
    for trace in log.iter().filter(|t| t.outcome()) {
        total += cost_model.c_out(trace, log)?;
    }
    Ok(total)
}

/// Costs a log under given alarm indices (one per trace).
pub fn cost_for_indices(log: &EventLog, indices: &[usize], cost_model: &CostModel) -> Result<CostReport> {
    assert_eq!(indices.len(), log.len(), "one alarm index per trace");
    let records = log
        .traces()
        .par_iter()
        .zip(indices.par_iter())
        .map(|(trace, &idx)| case_cost(trace, log, cost_model, idx))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport::from_records(records, as_is_cost(log, cost_model)?))
}

/// Costs a log under a policy using cached likelihoods.
pub fn log_cost_cached(
    log: &EventLog,
    cache: &PredictionCache,
    policy: &AlarmPolicy,
    cost_model: &CostModel,
) -> Result<CostReport> {
    policy.validate()?;
    cache.check(log)?;
    let indices: Vec<usize> = (0..log.len())
        .map(|i| alarm_index_from_scores(cache.trace_scores(i), policy))
        .collect();
    cost_for_indices(log, &indices, cost_model)
}

/// Costs a log under a policy, predicting prefixes as needed.
pub fn log_cost<E: OutcomeEstimator + ?Sized>(
    log: &EventLog,
    estimator: &E,
    policy: &AlarmPolicy,
    cost_model: &CostModel,
) -> Result<CostReport> {
    policy.validate()?;
    let indices: Vec<usize> = log
        .traces()
        .par_iter()
        .map(|t| alarm_index(t, estimator, policy))
        .collect();
    cost_for_indices(log, &indices, cost_model)
}

/// Whether alarms with these partition counts pay off under constant costs:
/// `|und&al| (eff c_out - c_in) > |des&al| (c_in + c_com)`.
pub fn roi_feasible(counts: &PartitionCounts, costs: &ConstantCosts) -> bool {
    let gain = counts.undesired_alarmed as f64 * (costs.eff * costs.c_out - costs.c_in);
    let loss = counts.desired_alarmed as f64 * (costs.c_in + costs.c_com);
    gain > loss
}

/// Whether any alarm can pay off at all under constant costs: `eff c_out > c_in`.
pub fn reasonable(costs: &ConstantCosts) -> bool {
    costs.eff * costs.c_out > costs.c_in
}
