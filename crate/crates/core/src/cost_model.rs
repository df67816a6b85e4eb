//! Alarm-based cost model `(c_in, c_out, c_com, eff)`.
//!
//! A [`CostSpec`] declares each component with one of the [`CostForm`]s and is
//! compiled into an evaluable [`CostModel`]. Costs are functions of the alarm
//! position `k`, the trace and the log; none of the built-in forms reads other
//! cases from the log.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{AttrValue, EventLog, Trace};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid cost spec: {0}")]
    InvalidSpec(String),
    #[error("case {case_id}: attribute {attr:?} not found")]
    MissingAttribute { case_id: String, attr: String },
    #[error("case {case_id}: {component} evaluated to {value}")]
    InvalidValue {
        case_id: String,
        component: &'static str,
        value: f64,
    },
    #[error("unknown scenario {0:?} (expected unemployment, financial or railway)")]
    UnknownScenario(String),
}

pub type Result<T> = std::result::Result<T, CostError>;

/// Functional form of one cost-model component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CostForm {
    Constant { value: f64 },
    /// `base * (1 - k / |trace|)`
    LinearPrefixDecay { base: f64 },
    /// `base` at `k = 1` rising linearly to `max` at `k = |trace|`.
    LinearPrefixGrowth { base: f64, max: f64 },
    /// `m * beta * exp(t(k))` with `t(k)` the time of event `k` rescaled to `[0, 1]`
    /// over the trace's time span.
    ExponentialTimeGrowth { m: f64, beta: f64 },
    /// `coeff * attr(trace)`, read from a numeric case attribute, or else from the
    /// last event carrying it.
    AttributeProportional { attr: String, coeff: f64 },
    /// `(v(trace) - v(hd^k(trace))) / v(trace)` for a cumulative numeric event
    /// attribute `v`; 0 when `v(trace) = 0`.
    PrefixRemainderRatio { attr: String },
}

impl CostForm {
    pub fn constant(value: f64) -> Self {
        CostForm::Constant { value }
    }

    fn depends_on_k(&self) -> bool {
        matches!(
            self,
            CostForm::LinearPrefixDecay { .. }
                | CostForm::LinearPrefixGrowth { .. }
                | CostForm::ExponentialTimeGrowth { .. }
                | CostForm::PrefixRemainderRatio { .. }
        )
    }

    fn validate(&self, component: &str) -> Result<()> {
        let bad = |msg: String| Err(CostError::InvalidSpec(format!("{component}: {msg}")));
        let finite_nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(CostError::InvalidSpec(format!(
                    "{component}: {name} must be finite and >= 0, got {v}"
                )))
            }
        };
        match self {
            CostForm::Constant { value } => finite_nonneg("value", *value),
            CostForm::LinearPrefixDecay { base } => finite_nonneg("base", *base),
            CostForm::LinearPrefixGrowth { base, max } => {
                finite_nonneg("base", *base)?;
                finite_nonneg("max", *max)?;
                if max < base {
                    return bad(format!("max {max} below base {base}"));
                }
                Ok(())
            }
            CostForm::ExponentialTimeGrowth { m, beta } => {
                finite_nonneg("m", *m)?;
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad(format!("beta must be > 0, got {beta}"));
                }
                Ok(())
            }
            CostForm::AttributeProportional { attr, coeff } => {
                finite_nonneg("coeff", *coeff)?;
                if attr.is_empty() {
                    return bad("empty attribute name".into());
                }
                Ok(())
            }
            CostForm::PrefixRemainderRatio { attr } => {
                if attr.is_empty() {
                    return bad("empty attribute name".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub c_in: CostForm,
    pub c_out: CostForm,
    pub c_com: CostForm,
    pub eff: CostForm,
}

impl CostSpec {
    pub fn constant(c_in: f64, c_out: f64, c_com: f64, eff: f64) -> Self {
        Self {
            c_in: CostForm::constant(c_in),
            c_out: CostForm::constant(c_out),
            c_com: CostForm::constant(c_com),
            eff: CostForm::constant(eff),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.c_in.validate("c_in")?;
        self.c_out.validate("c_out")?;
        self.c_com.validate("c_com")?;
        self.eff.validate("eff")?;
        for (name, form) in [("c_out", &self.c_out), ("c_com", &self.c_com)] {
            if form.depends_on_k() {
                return Err(CostError::InvalidSpec(format!(
                    "{name} cannot depend on the alarm position"
                )));
            }
        }
        if let CostForm::Constant { value } = self.eff {
            if value > 1.0 {
                return Err(CostError::InvalidSpec(format!("eff constant {value} exceeds 1")));
            }
        }
        Ok(())
    }

    /// The four components as numbers when every one of them is constant.
    pub fn constants(&self) -> Option<ConstantCosts> {
        match (&self.c_in, &self.c_out, &self.c_com, &self.eff) {
            (
                CostForm::Constant { value: c_in },
                CostForm::Constant { value: c_out },
                CostForm::Constant { value: c_com },
                CostForm::Constant { value: eff },
            ) => Some(ConstantCosts {
                c_in: *c_in,
                c_out: *c_out,
                c_com: *c_com,
                eff: *eff,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantCosts {
    pub c_in: f64,
    pub c_out: f64,
    pub c_com: f64,
    pub eff: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticCounts {
    /// Evaluations of `eff` that fell outside `[0, 1]` and were clamped.
    pub eff_clamped: u64,
    /// Remainder-ratio evaluations on a case whose total was 0.
    pub zero_total: u64,
}

/// A validated, evaluable cost model. Safe to share across threads; diagnostic
/// counters are atomic.
#[derive(Debug)]
pub struct CostModel {
    spec: CostSpec,
    eff_clamped: AtomicU64,
    zero_total: AtomicU64,
}

impl Clone for CostModel {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            eff_clamped: AtomicU64::new(self.eff_clamped.load(Ordering::Relaxed)),
            zero_total: AtomicU64::new(self.zero_total.load(Ordering::Relaxed)),
        }
    }
}

pub fn compile(spec: CostSpec) -> Result<CostModel> {
    spec.validate()?;
    Ok(CostModel {
        spec,
        eff_clamped: AtomicU64::new(0),
        zero_total: AtomicU64::new(0),
    })
}

impl CostModel {
    pub fn constant(c_in: f64, c_out: f64, c_com: f64, eff: f64) -> Result<Self> {
        compile(CostSpec::constant(c_in, c_out, c_com, eff))
    }

    pub fn spec(&self) -> &CostSpec {
        &self.spec
    }

    pub fn diagnostics(&self) -> DiagnosticCounts {
        DiagnosticCounts {
            eff_clamped: self.eff_clamped.load(Ordering::Relaxed),
            zero_total: self.zero_total.load(Ordering::Relaxed),
        }
    }

    /// Cost of intervening right after the `k`-th event.
    pub fn c_in(&self, k: usize, trace: &Trace, _log: &EventLog) -> Result<f64> {
        let v = self.evaluate(&self.spec.c_in, k, trace)?;
        checked_cost(v, "c_in", trace)
    }

    pub fn c_out(&self, trace: &Trace, _log: &EventLog) -> Result<f64> {
        let v = self.evaluate(&self.spec.c_out, trace.len(), trace)?;
        checked_cost(v, "c_out", trace)
    }

    pub fn c_com(&self, trace: &Trace, _log: &EventLog) -> Result<f64> {
        let v = self.evaluate(&self.spec.c_com, trace.len(), trace)?;
        checked_cost(v, "c_com", trace)
    }

    /// Mitigation effectiveness of intervening after the `k`-th event, clamped to `[0, 1]`.
    pub fn eff(&self, k: usize, trace: &Trace, _log: &EventLog) -> Result<f64> {
        let v = self.evaluate(&self.spec.eff, k, trace)?;
        if !v.is_finite() {
            return Err(CostError::InvalidValue {
                case_id: trace.case_id().to_string(),
                component: "eff",
                value: v,
            });
        }
        if !(0.0..=1.0).contains(&v) {
            self.eff_clamped.fetch_add(1, Ordering::Relaxed);
        }
        Ok(v.clamp(0.0, 1.0))
    }

    fn evaluate(&self, form: &CostForm, k: usize, trace: &Trace) -> Result<f64> {
        let n = trace.len() as f64;
        let k_f = k as f64;
        Ok(match form {
            CostForm::Constant { value } => *value,
            CostForm::LinearPrefixDecay { base } => base * (1.0 - k_f / n),
            CostForm::LinearPrefixGrowth { base, max } => {
                if trace.len() <= 1 {
                    *base
                } else {
                    base + (max - base) * (k_f - 1.0) / (n - 1.0)
                }
            }
            CostForm::ExponentialTimeGrowth { m, beta } => {
                let span = trace.end_time() - trace.start_time();
                let idx = k.clamp(1, trace.len()) - 1;
                let t = if span > 0.0 {
                    (trace.events()[idx].timestamp - trace.start_time()) / span
                } else {
                    0.0
                };
                m * beta * t.exp()
            }
            CostForm::AttributeProportional { attr, coeff } => coeff * case_value(trace, attr)?,
            CostForm::PrefixRemainderRatio { attr } => {
                let total = cumulative_value(trace, attr, trace.len());
                if total == 0.0 {
                    self.zero_total.fetch_add(1, Ordering::Relaxed);
                    0.0
                } else {
                    (total - cumulative_value(trace, attr, k)) / total
                }
            }
        })
    }
}

fn checked_cost(value: f64, component: &'static str, trace: &Trace) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(CostError::InvalidValue {
            case_id: trace.case_id().to_string(),
            component,
            value,
        })
    }
}

fn case_value(trace: &Trace, attr: &str) -> Result<f64> {
    if let Some(AttrValue::Real(v)) = trace.case_attributes().get(attr) {
        return Ok(*v);
    }
    trace
        .events()
        .iter()
        .rev()
        .find_map(|e| e.numeric.get(attr).copied())
        .ok_or_else(|| CostError::MissingAttribute {
            case_id: trace.case_id().to_string(),
            attr: attr.to_string(),
        })
}

/// Latest value of `attr` among the first `k` events, 0 if none carries it.
fn cumulative_value(trace: &Trace, attr: &str, k: usize) -> f64 {
    trace.events()[..k.min(trace.len())]
        .iter()
        .rev()
        .find_map(|e| e.numeric.get(attr).copied())
        .unwrap_or(0.0)
}

// ---------------------------------------------------------------------------
// Scenario presets
// ---------------------------------------------------------------------------

/// Per-case attribute holding the employee cost of checking a benefits case.
pub const ATTR_INTERVENTION_COST: &str = "intervention_cost";
/// Cumulative unentitled benefits paid so far.
pub const ATTR_UNENTITLED: &str = "unt";
/// Cumulative value of malicious transactions so far.
pub const ATTR_MALICIOUS_VALUE: &str = "value";
/// Customer asset value.
pub const ATTR_ASSET: &str = "asset";
/// Ticket revenue lost over the disruption window.
pub const ATTR_DISRUPTION_COST: &str = "disruption_cost";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Unemployment,
    Financial,
    Railway,
}

impl FromStr for Scenario {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unemployment" => Ok(Scenario::Unemployment),
            "financial" => Ok(Scenario::Financial),
            "railway" => Ok(Scenario::Railway),
            other => Err(CostError::UnknownScenario(other.to_string())),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Unemployment => "unemployment",
            Scenario::Financial => "financial",
            Scenario::Railway => "railway",
        })
    }
}

/// Free parameters of the scenario presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Cost of mailing a replacement card.
    pub post_cost: f64,
    /// Fraction of customers lost after an unnecessary card block.
    pub churn_fraction: f64,
    /// Minimum intervention cost for railway maintenance.
    pub min_cost: f64,
    /// Growth factor of the railway intervention cost.
    pub beta: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            post_cost: 10.0,
            churn_fraction: 0.05,
            min_cost: 1.0,
            beta: 1.0,
        }
    }
}

pub fn scenario_preset(name: &str) -> Result<CostSpec> {
    Ok(scenario_spec(name.parse()?, &ScenarioParams::default()))
}

pub fn scenario_spec(scenario: Scenario, params: &ScenarioParams) -> CostSpec {
    let attr = |name: &str, coeff: f64| CostForm::AttributeProportional {
        attr: name.to_string(),
        coeff,
    };
    match scenario {
        Scenario::Unemployment => CostSpec {
            c_in: attr(ATTR_INTERVENTION_COST, 1.0),
            c_out: attr(ATTR_UNENTITLED, 1.0),
            c_com: CostForm::constant(0.0),
            eff: CostForm::PrefixRemainderRatio {
                attr: ATTR_UNENTITLED.to_string(),
            },
        },
        Scenario::Financial => CostSpec {
            c_in: CostForm::constant(params.post_cost),
            c_out: attr(ATTR_MALICIOUS_VALUE, 1.0),
            c_com: attr(ATTR_ASSET, params.churn_fraction),
            eff: CostForm::PrefixRemainderRatio {
                attr: ATTR_MALICIOUS_VALUE.to_string(),
            },
        },
        Scenario::Railway => CostSpec {
            c_in: CostForm::ExponentialTimeGrowth {
                m: params.min_cost,
                beta: params.beta,
            },
            c_out: attr(ATTR_DISRUPTION_COST, 1.0),
            c_com: CostForm::constant(0.0),
            eff: CostForm::constant(1.0),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::Event;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn trace_with(n: usize, case: BTreeMap<String, AttrValue>, cumulative: Option<&str>) -> Trace {
        let events = (0..n)
            .map(|i| {
                let e = Event::new("c", "a", 100.0 + 10.0 * i as f64);
                match cumulative {
                    Some(attr) => e.with_numeric(attr, 5.0 * (i + 1) as f64),
                    None => e,
                }
            })
            .collect();
        Trace::new("c", events, case, true).unwrap()
    }

    fn empty_log() -> EventLog {
        EventLog::empty()
    }

    #[test]
    fn ratio_row_compiles() {
        let spec = CostSpec {
            c_in: CostForm::constant(1.0),
            c_out: CostForm::constant(20.0),
            c_com: CostForm::constant(0.0),
            eff: CostForm::LinearPrefixDecay { base: 1.0 },
        };
        let cm = compile(spec).unwrap();
        let t = trace_with(4, BTreeMap::new(), None);
        assert_eq!(cm.c_out(&t, &empty_log()).unwrap() / cm.c_in(1, &t, &empty_log()).unwrap(), 20.0);
        assert_eq!(cm.eff(2, &t, &empty_log()).unwrap(), 0.5);
    }

    #[test]
    fn constant_eff_is_full_mitigation() {
        let cm = CostModel::constant(1.0, 5.0, 0.0, 1.0).unwrap();
        let t = trace_with(6, BTreeMap::new(), None);
        for k in 1..=6 {
            assert_eq!(cm.eff(k, &t, &empty_log()).unwrap(), 1.0);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(CostModel::constant(-1.0, 1.0, 0.0, 1.0).is_err());
        assert!(CostModel::constant(1.0, 1.0, 0.0, 1.5).is_err());
        let mut spec = CostSpec::constant(1.0, 1.0, 0.0, 1.0);
        spec.c_out = CostForm::LinearPrefixDecay { base: 1.0 };
        assert!(compile(spec.clone()).is_err());
        spec.c_out = CostForm::constant(1.0);
        spec.c_in = CostForm::ExponentialTimeGrowth { m: 1.0, beta: 0.0 };
        assert!(compile(spec.clone()).is_err());
        spec.c_in = CostForm::LinearPrefixGrowth { base: 2.0, max: 1.0 };
        assert!(compile(spec).is_err());
    }

    #[test]
    fn growth_forms() {
        let t = trace_with(5, BTreeMap::new(), None);
        let mut spec = CostSpec::constant(1.0, 1.0, 0.0, 1.0);
        spec.c_in = CostForm::LinearPrefixGrowth { base: 1.0, max: 3.0 };
        let cm = compile(spec.clone()).unwrap();
        assert_eq!(cm.c_in(1, &t, &empty_log()).unwrap(), 1.0);
        assert_eq!(cm.c_in(3, &t, &empty_log()).unwrap(), 2.0);
        assert_eq!(cm.c_in(5, &t, &empty_log()).unwrap(), 3.0);

        spec.c_in = CostForm::ExponentialTimeGrowth { m: 2.0, beta: 0.5 };
        let cm = compile(spec).unwrap();
        assert!((cm.c_in(1, &t, &empty_log()).unwrap() - 1.0).abs() < 1e-12);
        assert!((cm.c_in(5, &t, &empty_log()).unwrap() - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn remainder_ratio_boundaries() {
        let t = trace_with(4, BTreeMap::new(), Some("unt"));
        let mut spec = CostSpec::constant(1.0, 1.0, 0.0, 1.0);
        spec.eff = CostForm::PrefixRemainderRatio { attr: "unt".into() };
        let cm = compile(spec.clone()).unwrap();
        // unt = 5, 10, 15, 20
        assert_eq!(cm.eff(0, &t, &empty_log()).unwrap(), 1.0);
        assert_eq!(cm.eff(1, &t, &empty_log()).unwrap(), 0.75);
        assert_eq!(cm.eff(4, &t, &empty_log()).unwrap(), 0.0);

        let zero = trace_with(3, BTreeMap::new(), None);
        let cm = compile(spec).unwrap();
        assert_eq!(cm.eff(1, &zero, &empty_log()).unwrap(), 0.0);
        assert_eq!(cm.diagnostics().zero_total, 1);
    }

    #[test]
    fn eff_clamping_is_counted() {
        // a non-cumulative attribute that shrinks drives the ratio above 1
        let events = vec![
            Event::new("c", "a", 0.0).with_numeric("v", -5.0),
            Event::new("c", "a", 1.0).with_numeric("v", 10.0),
        ];
        let t = Trace::new("c", events, BTreeMap::new(), true).unwrap();
        let mut spec = CostSpec::constant(1.0, 1.0, 0.0, 1.0);
        spec.eff = CostForm::PrefixRemainderRatio { attr: "v".into() };
        let cm = compile(spec).unwrap();
        assert_eq!(cm.eff(1, &t, &empty_log()).unwrap(), 1.0);
        assert_eq!(cm.diagnostics().eff_clamped, 1);
    }

    #[test]
    fn attribute_lookup() {
        let case = BTreeMap::from([("asset".to_string(), AttrValue::Real(1000.0))]);
        let t = trace_with(3, case, Some("value"));
        let cm = compile(scenario_preset("financial").unwrap()).unwrap();
        assert_eq!(cm.c_com(&t, &empty_log()).unwrap(), 50.0);
        // falls back to the last event carrying the attribute
        assert_eq!(cm.c_out(&t, &empty_log()).unwrap(), 15.0);
        let bare = trace_with(3, BTreeMap::new(), None);
        assert!(matches!(
            cm.c_out(&bare, &empty_log()),
            Err(CostError::MissingAttribute { .. })
        ));
    }

    #[test]
    fn presets() {
        let t = trace_with(3, BTreeMap::new(), None);
        for name in ["railway", "unemployment"] {
            let cm = compile(scenario_preset(name).unwrap()).unwrap();
            assert_eq!(cm.c_com(&t, &empty_log()).unwrap(), 0.0);
        }
        let params = ScenarioParams {
            churn_fraction: 0.0,
            ..Default::default()
        };
        let cm = compile(scenario_spec(Scenario::Financial, &params)).unwrap();
        let case = BTreeMap::from([("asset".to_string(), AttrValue::Real(1e6))]);
        assert_eq!(cm.c_com(&trace_with(2, case, None), &empty_log()).unwrap(), 0.0);
        assert!(matches!(scenario_preset("bakery"), Err(CostError::UnknownScenario(_))));
        let railway = compile(scenario_preset("railway").unwrap()).unwrap();
        assert_eq!(railway.eff(2, &t, &empty_log()).unwrap(), 1.0);
    }

    #[test]
    fn spec_toml_round_trip() {
        let text = r#"
            c_in = { form = "constant", value = 1.0 }
            c_out = { form = "attribute_proportional", attr = "unt", coeff = 1.0 }
            c_com = { form = "constant", value = 0.0 }
            eff = { form = "linear_prefix_decay", base = 1.0 }
        "#;
        let spec: CostSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.eff, CostForm::LinearPrefixDecay { base: 1.0 });
        let again: CostSpec = toml::from_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
        assert!(spec.constants().is_none());
        assert!(CostSpec::constant(1.0, 2.0, 0.0, 0.5).constants().is_some());
    }

    proptest! {
        #[test]
        fn decay_non_increasing_and_exp_growth_non_decreasing(
            n in 1usize..30,
            gaps in proptest::collection::vec(0.0f64..1e6, 30),
            base in 0.0f64..10.0,
        ) {
            let mut t = 1e9;
            let events: Vec<Event> = (0..n).map(|i| { t += gaps[i]; Event::new("c", "a", t) }).collect();
            let trace = Trace::new("c", events, BTreeMap::new(), true).unwrap();
            let mut spec = CostSpec::constant(1.0, 1.0, 0.0, 1.0);
            spec.eff = CostForm::LinearPrefixDecay { base: base.min(1.0) };
            spec.c_in = CostForm::ExponentialTimeGrowth { m: 1.0, beta: base + 0.1 };
            let cm = compile(spec.clone()).unwrap();
            let again = compile(spec).unwrap();
            let log = EventLog::empty();
            for k in 1..n {
                prop_assert!(cm.eff(k + 1, &trace, &log).unwrap() <= cm.eff(k, &trace, &log).unwrap());
                prop_assert!(cm.c_in(k + 1, &trace, &log).unwrap() >= cm.c_in(k, &trace, &log).unwrap());
                prop_assert_eq!(cm.c_in(k, &trace, &log).unwrap(), again.c_in(k, &trace, &log).unwrap());
            }
        }
    }
}
