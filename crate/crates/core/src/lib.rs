//! Alarm-based prescriptive process monitoring: an outcome estimator over event
//! log prefixes, a parameterised alarm cost model, empirical alarm thresholding,
//! and cost, benefit and ROI evaluation.

pub mod alarm_engine;
pub mod cost_model;
pub mod encoding;
pub mod estimator;
pub mod event_log;
pub mod experiment;
pub mod thresholding;
