#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use alarm_monitor::alarm_engine::AlarmPolicy;
use alarm_monitor::cost_model::ConstantCosts;
use alarm_monitor::estimator::OutcomeEstimator;
use alarm_monitor::event_log::{Event, EventLog, Prefix, Trace};
use proptest::prelude::*;

/// Likelihoods looked up by (case id, prefix length).
pub struct TableEstimator(pub HashMap<(String, usize), f64>);

impl OutcomeEstimator for TableEstimator {
    fn likelihood(&self, prefix: &Prefix<'_>) -> f64 {
        self.0[&(prefix.trace().case_id().to_string(), prefix.k())]
    }
}

/// One generated case: its length, outcome and a likelihood per proper prefix.
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub len: usize,
    pub outcome: bool,
    pub scores: Vec<f64>,
}

pub fn case_strategy(max_len: usize) -> impl Strategy<Value = CaseSpec> {
    (1..=max_len, any::<bool>()).prop_flat_map(|(len, outcome)| {
        // coarse values so ties and threshold hits are common
        prop::collection::vec((0u8..=20).prop_map(|v| v as f64 / 20.0), len - 1)
            .prop_map(move |scores| CaseSpec { len, outcome, scores })
    })
}

pub fn log_strategy(max_cases: usize, max_len: usize) -> impl Strategy<Value = Vec<CaseSpec>> {
    prop::collection::vec(case_strategy(max_len), 0..=max_cases)
}

pub fn build(cases: &[CaseSpec]) -> (EventLog, TableEstimator, Vec<Vec<f64>>) {
    let mut traces = Vec::new();
    let mut table = HashMap::new();
    for (i, c) in cases.iter().enumerate() {
        let id = format!("c{i}");
        let events = (0..c.len).map(|j| Event::new(id.clone(), "a", (i * 10 + j) as f64)).collect();
        traces.push(Trace::new(id.clone(), events, BTreeMap::new(), c.outcome).unwrap());
        for (k, &p) in c.scores.iter().enumerate() {
            table.insert((id.clone(), k + 1), p);
        }
    }
    let scores = cases.iter().map(|c| c.scores.clone()).collect();
    (EventLog::new(traces).unwrap(), TableEstimator(table), scores)
}

pub fn costs_strategy() -> impl Strategy<Value = ConstantCosts> {
    (0.0f64..10.0, 0.0f64..50.0, 0.0f64..20.0, 0.0f64..=1.0).prop_map(|(c_in, c_out, c_com, eff)| ConstantCosts {
        c_in,
        c_out,
        c_com,
        eff,
    })
}

pub fn policy_strategy() -> impl Strategy<Value = AlarmPolicy> {
    let tau = (0u8..=20).prop_map(|v| v as f64 / 20.0);
    let opt_tau = prop::option::of(tau.clone());
    prop_oneof![
        Just(AlarmPolicy::Never),
        Just(AlarmPolicy::Always),
        tau.prop_map(AlarmPolicy::global),
        (prop::collection::btree_map(1usize..6, opt_tau.clone(), 0..4), opt_tau)
            .prop_map(|(thresholds, default)| AlarmPolicy::PerLength { thresholds, default }),
    ]
}

/// Alarm index and total cost written directly from the case-cost table, without
/// the library's cost machinery.
pub fn brute_force_cost(cases: &[CaseSpec], costs: &ConstantCosts, policy: &AlarmPolicy) -> f64 {
    let tau_at = |k: usize| -> Option<f64> {
        match policy {
            AlarmPolicy::Never => None,
            AlarmPolicy::Always => Some(f64::NEG_INFINITY),
            AlarmPolicy::Global { tau } => Some(*tau),
            AlarmPolicy::PerLength { thresholds, default } => match thresholds.get(&k) {
                Some(t) => *t,
                None => *default,
            },
        }
    };
    let mut total = 0.0;
    for c in cases {
        let mut alarm = 0;
        for k in 1..c.len {
            if let Some(t) = tau_at(k) {
                if c.scores[k - 1] >= t {
                    alarm = k;
                    break;
                }
            }
        }
        total += match (c.outcome, alarm > 0) {
            (true, true) => costs.c_in + (1.0 - costs.eff) * costs.c_out,
            (false, true) => costs.c_in + costs.c_com,
            (true, false) => costs.c_out,
            (false, false) => 0.0,
        };
    }
    total
}
