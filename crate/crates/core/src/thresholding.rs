//! Empirical thresholding: pick the alarm threshold that minimises the realised
//! cost on a held-out log for a fixed estimator and cost model.
//!
//! Likelihoods are predicted once per prefix and every per-case cost outcome is
//! tabulated once, so evaluating a candidate threshold is a scan over the cache.
//! Candidates are a regular grid on `[0, 1]`, every distinct cached likelihood,
//! the baselines 0 and 0.5, a golden-section refinement around the best grid
//! point, and an explicit never-alarm policy. Because every distinct likelihood
//! is a candidate, the search is exact over the alarm sets a global threshold can
//! produce. Among equal costs the larger threshold wins, with never-alarm ranked
//! above every numeric threshold.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alarm_engine::{alarm_index_from_scores, case_cost, AlarmError, AlarmPolicy, PredictionCache};
use crate::cost_model::CostModel;
use crate::estimator::OutcomeEstimator;
use crate::event_log::EventLog;

pub const DEFAULT_RESOLUTION: usize = 101;
const GOLDEN_ITERATIONS: usize = 24;
const MAX_COORDINATE_PASSES: usize = 4;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("thresholding log is empty")]
    EmptyLog,
    #[error("resolution must be at least 2 grid points, got {0}")]
    Resolution(usize),
    #[error(transparent)]
    Alarm(#[from] AlarmError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ThresholdError>;

/// One evaluated candidate. `tau = None` is never alarming; `length = None` is a
/// global threshold, `Some(k)` a threshold for prefix length `k` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub length: Option<usize>,
    pub tau: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearchResult {
    pub best_policy: AlarmPolicy,
    pub best_cost: f64,
    pub evaluated: Vec<ThresholdPoint>,
}

impl ThresholdSearchResult {
    /// Writes `length,tau,cost,best`; global points have an empty length and
    /// never-alarm is written as `never`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let best_global = match &self.best_policy {
            AlarmPolicy::Global { tau } => Some(Some(*tau)),
            AlarmPolicy::Never => Some(None),
            _ => None,
        };
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(["length", "tau", "cost", "best"])?;
        for p in &self.evaluated {
            let is_best = p.length.is_none() && best_global == Some(p.tau) && p.cost == self.best_cost;
            writer.write_record([
                p.length.map(|k| k.to_string()).unwrap_or_default(),
                p.tau.map_or_else(|| "never".to_string(), |t| t.to_string()),
                p.cost.to_string(),
                is_best.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Cost of every case under every alarm position. `alarm_at[i][k - 1]` is the
/// cost of trace `i` alarmed at `hd^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    no_alarm: Vec<f64>,
    alarm_at: Vec<Vec<f64>>,
}

impl CostTable {
    pub fn build(log: &EventLog, cost_model: &CostModel) -> Result<Self> {
        let rows = log
            .traces()
            .par_iter()
            .map(|trace| {
                let none = case_cost(trace, log, cost_model, 0)?.cost;
                let at = (1..trace.len())
                    .map(|k| case_cost(trace, log, cost_model, k).map(|r| r.cost))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok((none, at))
            })
            .collect::<std::result::Result<Vec<_>, AlarmError>>()?;
        let (no_alarm, alarm_at) = rows.into_iter().unzip();
        Ok(Self { no_alarm, alarm_at })
    }

    /// Total cost under a policy, summed in trace order so it matches a full
    /// cost report exactly.
    pub fn total_cost(&self, cache: &PredictionCache, policy: &AlarmPolicy) -> f64 {
        let mut total = 0.0;
        for (i, none) in self.no_alarm.iter().enumerate() {
            total += match alarm_index_from_scores(cache.trace_scores(i), policy) {
                0 => *none,
                k => self.alarm_at[i][k - 1],
            };
        }
        total
    }
}

fn check_inputs(log: &EventLog, cache: &PredictionCache, resolution: usize) -> Result<()> {
    if log.is_empty() {
        return Err(ThresholdError::EmptyLog);
    }
    if resolution < 2 {
        return Err(ThresholdError::Resolution(resolution));
    }
    if cache.len() != log.len() {
        return Err(AlarmError::CacheMismatch {
            cached: cache.len(),
            log: log.len(),
        }
        .into());
    }
    Ok(())
}

fn grid(resolution: usize) -> impl Iterator<Item = f64> {
    let step = (resolution - 1) as f64;
    (0..resolution).map(move |i| i as f64 / step)
}

/// Sorted, de-duplicated thresholds clipped to `[0, 1]`.
fn candidate_set(points: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut taus: Vec<f64> = points
        .into_iter()
        .filter(|t| t.is_finite())
        .map(|t| t.clamp(0.0, 1.0))
        .collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

/// Orders (tau, cost) pairs so the preferred one is the minimum: lower cost first,
/// then larger tau, with never-alarm (`None`) the largest tau.
fn preference(a: &(Option<f64>, f64), b: &(Option<f64>, f64)) -> Ordering {
    let tau_rank = |t: &Option<f64>| t.unwrap_or(f64::INFINITY);
    a.1.total_cmp(&b.1).then_with(|| tau_rank(&b.0).total_cmp(&tau_rank(&a.0)))
}

fn best_of(points: &[(Option<f64>, f64)]) -> (Option<f64>, f64) {
    *points.iter().min_by(|a, b| preference(a, b)).expect("non-empty candidate set")
}

fn evaluate<F>(taus: &[f64], cost: F) -> Vec<(Option<f64>, f64)>
where
    F: Fn(Option<f64>) -> f64 + Sync,
{
    let mut points: Vec<(Option<f64>, f64)> = taus.par_iter().map(|&t| (Some(t), cost(Some(t)))).collect();
    points.push((None, cost(None)));
    points
}

fn global_policy(tau: Option<f64>) -> AlarmPolicy {
    tau.map_or(AlarmPolicy::Never, AlarmPolicy::global)
}

/// Golden-section search for a lower cost inside `[lo, hi]`; returns every point probed.
fn golden_refine<F: Fn(f64) -> f64>(lo: f64, hi: f64, cost: F) -> Vec<(Option<f64>, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    let mut probed = vec![(Some(c), fc), (Some(d), fd)];
    for _ in 0..GOLDEN_ITERATIONS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = cost(c);
            probed.push((Some(c), fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = cost(d);
            probed.push((Some(d), fd));
        }
    }
    probed
}

/// Best global threshold from cached likelihoods.
pub fn find_global_threshold_cached(
    log: &EventLog,
    cache: &PredictionCache,
    cost_model: &CostModel,
    resolution: usize,
) -> Result<ThresholdSearchResult> {
    check_inputs(log, cache, resolution)?;
    let table = CostTable::build(log, cost_model)?;
    let cost = |tau: Option<f64>| table.total_cost(cache, &global_policy(tau));

    let taus = candidate_set(grid(resolution).chain(cache.all_scores()).chain([0.0, 0.5]));
    let mut points = evaluate(&taus, cost);

    if let (Some(best), _) = best_of(&points) {
        let step = 1.0 / (resolution - 1) as f64;
        let (lo, hi) = ((best - step).max(0.0), (best + step).min(1.0));
        if hi > lo {
            points.extend(golden_refine(lo, hi, |t| cost(Some(t))));
        }
    }

    let (tau, best_cost) = best_of(&points);
    Ok(ThresholdSearchResult {
        best_policy: global_policy(tau),
        best_cost,
        evaluated: points
            .into_iter()
            .map(|(tau, cost)| ThresholdPoint { length: None, tau, cost })
            .collect(),
    })
}

/// Predicts every prefix of `log` once, then searches a global threshold.
pub fn find_global_threshold<E: OutcomeEstimator + ?Sized>(
    log: &EventLog,
    estimator: &E,
    cost_model: &CostModel,
    resolution: usize,
) -> Result<ThresholdSearchResult> {
    if log.is_empty() {
        return Err(ThresholdError::EmptyLog);
    }
    let cache = PredictionCache::build(log, estimator);
    find_global_threshold_cached(log, &cache, cost_model, resolution)
}

/// One threshold per prefix length, found by coordinate search started from the
/// best global threshold. Each length is re-optimised in turn with the others
/// fixed; since the current value is always a candidate, the cost never rises
/// above the global optimum. Lengths that no trace reaches keep the global value.
pub fn find_per_length_thresholds_cached(
    log: &EventLog,
    cache: &PredictionCache,
    cost_model: &CostModel,
    resolution: usize,
) -> Result<ThresholdSearchResult> {
    let global = find_global_threshold_cached(log, cache, cost_model, resolution)?;
    let default = match global.best_policy {
        AlarmPolicy::Global { tau } => Some(tau),
        _ => None,
    };
    let table = CostTable::build(log, cost_model)?;

    // Likelihoods observed at each prefix length.
    let mut by_length: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
    for i in 0..cache.len() {
        for (j, p) in cache.trace_scores(i).iter().enumerate() {
            by_length.entry(j + 1).or_default().insert(p.to_bits());
        }
    }

    let mut thresholds: BTreeMap<usize, Option<f64>> = by_length.keys().map(|&k| (k, default)).collect();
    let mut evaluated = global.evaluated;
    let mut best_cost = global.best_cost;

    for _ in 0..MAX_COORDINATE_PASSES {
        let mut changed = false;
        for (&k, scores) in &by_length {
            let current = thresholds[&k];
            let taus = candidate_set(
                grid(resolution)
                    .chain(scores.iter().map(|&b| f64::from_bits(b)))
                    .chain([0.0, 0.5])
                    .chain(current),
            );
            let cost = |tau: Option<f64>| {
                let mut trial = thresholds.clone();
                trial.insert(k, tau);
                table.total_cost(
                    cache,
                    &AlarmPolicy::PerLength {
                        thresholds: trial,
                        default,
                    },
                )
            };
            let points = evaluate(&taus, cost);
            let (tau, c) = best_of(&points);
            evaluated.extend(points.into_iter().map(|(tau, cost)| ThresholdPoint {
                length: Some(k),
                tau,
                cost,
            }));
            if tau != current {
                changed = true;
                thresholds.insert(k, tau);
            }
            best_cost = c;
        }
        if !changed {
            break;
        }
    }

    Ok(ThresholdSearchResult {
        best_policy: AlarmPolicy::PerLength { thresholds, default },
        best_cost,
        evaluated,
    })
}

pub fn find_per_length_thresholds<E: OutcomeEstimator + ?Sized>(
    log: &EventLog,
    estimator: &E,
    cost_model: &CostModel,
    resolution: usize,
) -> Result<ThresholdSearchResult> {
    if log.is_empty() {
        return Err(ThresholdError::EmptyLog);
    }
    let cache = PredictionCache::build(log, estimator);
    find_per_length_thresholds_cached(log, &cache, cost_model, resolution)
}
