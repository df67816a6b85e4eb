//! Acceptance criteria, one PASS/FAIL/SKIP line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use alarm_monitor::alarm_engine::{log_cost, log_cost_cached, roi_feasible, AlarmPolicy, PartitionCounts, PredictionCache};
use alarm_monitor::cost_model::{compile, ConstantCosts, CostModel};
use alarm_monitor::estimator::gbt::{logistic_loss, negative_gradient};
use alarm_monitor::experiment::{
    prefix_auc, prepare, run_pipeline, run_sweep, train_estimator, ExperimentConfig, PreparedLogs,
    ResearchQuestion, SweepCell, SyntheticSpec,
};
use alarm_monitor::thresholding::{find_global_threshold_cached, DEFAULT_RESOLUTION};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_901;
const RQ1_RATIOS: [f64; 6] = [1.0, 2.0, 3.0, 5.0, 10.0, 20.0];

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// Synthetic log for the cost-behaviour criteria: 2,000 cases, 45% undesired.
fn base_config(signal: f64) -> ExperimentConfig {
    ExperimentConfig::synthetic(SyntheticSpec {
        n_cases: 2_000,
        class_ratio: 0.45,
        min_length: 2,
        median_length: 6,
        max_length: 12,
        signal_strength: signal,
        n_activities: 8,
        seed: SEED,
    })
}

struct Fixture {
    prepared: PreparedLogs,
    thres_cache: PredictionCache,
    test_cache: PredictionCache,
}

impl Fixture {
    fn new(signal: f64) -> Self {
        let config = base_config(signal);
        let prepared = prepare(&config).expect("prepare");
        let estimator = train_estimator(&config, &prepared.train).expect("train");
        let thres_cache = PredictionCache::build(&prepared.thres, &estimator);
        let test_cache = PredictionCache::build(&prepared.test, &estimator);
        Self {
            prepared,
            thres_cache,
            test_cache,
        }
    }

    fn fit(&self, cm: &CostModel) -> AlarmPolicy {
        find_global_threshold_cached(&self.prepared.thres, &self.thres_cache, cm, DEFAULT_RESOLUTION)
            .expect("threshold")
            .best_policy
    }

    fn thres_cost(&self, cm: &CostModel, policy: &AlarmPolicy) -> f64 {
        log_cost_cached(&self.prepared.thres, &self.thres_cache, policy, cm).unwrap().summary.total_cost
    }

    fn test_summary(&self, cm: &CostModel, policy: &AlarmPolicy) -> alarm_monitor::alarm_engine::CostSummary {
        log_cost_cached(&self.prepared.test, &self.test_cache, policy, cm).unwrap().summary
    }

    /// Benefit on the test log of the threshold fitted on the thresholding log.
    fn cell_benefit(&self, cell: SweepCell) -> f64 {
        let cm = compile(cell.cost_spec()).unwrap();
        self.test_summary(&cm, &self.fit(&cm)).benefit
    }
}

fn decay_model(ratio: f64, com: f64) -> CostModel {
    compile(SweepCell { ratio, eff: None, com }.cost_spec()).unwrap()
}

fn c1_cost_oracle() -> Verdict {
    let started = Instant::now();
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 1_000, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let strategy = (common::log_strategy(10, 6), common::costs_strategy(), common::policy_strategy());
    let outcome = runner.run(&strategy, |(cases, costs, policy)| {
        let (log, est, _) = common::build(&cases);
        let cm = CostModel::constant(costs.c_in, costs.c_out, costs.c_com, costs.eff).unwrap();
        let got = log_cost(&log, &est, &policy, &cm).unwrap().summary.total_cost;
        let want = common::brute_force_cost(&cases, &costs, &policy);
        proptest::prop_assert_eq!(got.to_bits(), want.to_bits());
        Ok(())
    });
    let elapsed = started.elapsed();
    match outcome {
        Ok(()) => check(
            elapsed < Duration::from_secs(30),
            format!("1000 random instances equal the brute-force evaluator bit for bit in {elapsed:.2?}"),
        ),
        Err(e) => Verdict::Fail(format!("mismatch: {e}")),
    }
}

fn c2_thres_dominance(fx: &Fixture, setup: Duration) -> Verdict {
    let started = Instant::now();
    let mut worst_margin = f64::INFINITY;
    let mut failures = Vec::new();
    for ratio in RQ1_RATIOS {
        let cm = decay_model(ratio, 0.0);
        let opt = fx.thres_cost(&cm, &fx.fit(&cm));
        let baselines = [AlarmPolicy::Never, AlarmPolicy::global(0.0), AlarmPolicy::global(0.5)]
            .map(|p| fx.thres_cost(&cm, &p));
        let best_baseline = baselines.iter().copied().fold(f64::INFINITY, f64::min);
        worst_margin = worst_margin.min(best_baseline - opt);
        if opt > best_baseline {
            failures.push(format!("ratio {ratio}: {opt} > {best_baseline}"));
        }
    }
    let elapsed = started.elapsed() + setup;
    if !failures.is_empty() {
        return Verdict::Fail(failures.join("; "));
    }
    check(
        elapsed < Duration::from_secs(120),
        format!("optimized <= min(never, tau=0, tau=0.5) at all 6 ratios (smallest margin {worst_margin:.4}), {elapsed:.2?} incl. training"),
    )
}

fn c3_test_behaviour(fx: &Fixture) -> Verdict {
    let cm = decay_model(1.0, 0.0);
    let opt = fx.test_summary(&cm, &fx.fit(&cm)).total_cost;
    let never = fx.test_summary(&cm, &AlarmPolicy::Never).total_cost;
    let balanced_ok = opt <= never * 1.02;

    let cm = decay_model(20.0, 0.0);
    let opt20 = fx.test_summary(&cm, &fx.fit(&cm)).total_cost;
    let never20 = fx.test_summary(&cm, &AlarmPolicy::Never).total_cost;
    let half20 = fx.test_summary(&cm, &AlarmPolicy::global(0.5)).total_cost;
    let tol = 0.02 * never20;
    let skewed_ok = opt20 <= never20 + tol && opt20 <= half20 + tol;
    check(
        balanced_ok && skewed_ok,
        format!(
            "1:1 optimized {opt:.2} vs never {never:.2}; 20:1 optimized {opt20:.2} vs never {never20:.2}, tau=0.5 {half20:.2} (tol {tol:.2})"
        ),
    )
}

fn c4_roi_condition(fx: &Fixture) -> Verdict {
    let costs = ConstantCosts { c_in: 1.5, c_out: 2.0, c_com: 0.0, eff: 0.5 };
    let cm = CostModel::constant(costs.c_in, costs.c_out, costs.c_com, costs.eff).unwrap();
    let policy = fx.fit(&cm);
    let summary = log_cost_cached(&fx.prepared.thres, &fx.thres_cache, &policy, &cm).unwrap().summary;
    let mut any_feasible = false;
    for und_al in 0..=300 {
        for des_al in 1..=300 {
            let counts = PartitionCounts {
                undesired_alarmed: und_al,
                desired_alarmed: des_al,
                undesired_not_alarmed: 7,
                desired_not_alarmed: 3,
            };
            any_feasible |= roi_feasible(&counts, &costs);
        }
    }
    check(
        summary.benefit <= 0.0 && !any_feasible,
        format!(
            "fitted {} has thresholding benefit {}; roi_feasible false for all 300x300 count pairs with a false alarm: {}",
            policy.label(),
            summary.benefit,
            !any_feasible
        ),
    )
}

fn c5_benefit_vs_eff(fx: &Fixture) -> Verdict {
    let benefits: Vec<f64> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&e| fx.cell_benefit(SweepCell { ratio: 20.0, eff: Some(e), com: 0.0 }))
        .collect();
    let cm = CostModel::constant(1.0, 20.0, 0.0, 1.0).unwrap();
    let tol = 0.05 * fx.test_summary(&cm, &AlarmPolicy::Never).as_is_avg_cost;
    let monotone = benefits.windows(2).all(|w| w[1] >= w[0] - tol);
    check(
        monotone && benefits[2] > 0.0,
        format!("ratio 20:1 benefit at eff 0/0.5/1 = {:.3}/{:.3}/{:.3} (tol {tol:.3})", benefits[0], benefits[1], benefits[2]),
    )
}

fn c6_compensation(fx: &Fixture) -> Verdict {
    let b0 = fx.cell_benefit(SweepCell { ratio: 2.0, eff: None, com: 0.0 });
    let b20 = fx.cell_benefit(SweepCell { ratio: 2.0, eff: None, com: 20.0 });
    check(b20 <= b0, format!("ratio 2:1 benefit with c_com 20 = {b20:.4}, with c_com 0 = {b0:.4}"))
}

fn c7_gradient() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        let f: f64 = rng.gen_range(-6.0..6.0);
        let h = 1e-5;
        let fd = -(logistic_loss(y, f + h) - logistic_loss(y, f - h)) / (2.0 * h);
        let g = negative_gradient(y, f);
        worst = worst.max((g - fd).abs() / g.abs());
    }
    check(worst < 1e-6, format!("max relative error {worst:.2e} over 100 samples"))
}

fn held_out_auc(signal: f64) -> f64 {
    let config = base_config(signal);
    let prepared = prepare(&config).unwrap();
    let est = train_estimator(&config, &prepared.train).unwrap();
    prefix_auc(&prepared.test, &PredictionCache::build(&prepared.test, &est)).unwrap()
}

fn c8_estimator_quality() -> Verdict {
    let high = held_out_auc(0.8);
    let none = held_out_auc(0.0);
    check(
        high >= 0.90 && (0.45..=0.55).contains(&none),
        format!("test-prefix AUC {high:.4} at signal 0.8, {none:.4} at signal 0"),
    )
}

fn sweep_bytes(config: &ExperimentConfig) -> (String, String) {
    let out = run_pipeline(config).unwrap();
    let mut csv = String::new();
    for rq in ResearchQuestion::ALL {
        csv.push_str(&run_sweep(config, &out.prepared, &out.estimator, rq).unwrap().to_csv());
    }
    (csv, out.estimator.to_json())
}

fn c9_determinism() -> Verdict {
    let mut config = base_config(0.5);
    if let alarm_monitor::experiment::DataSource::Synthetic(spec) = &mut config.data {
        spec.n_cases = 800;
    }
    config.estimator.budget = 3;
    let (a, model_a) = sweep_bytes(&config);
    let (b, model_b) = sweep_bytes(&config);
    check(
        a == b && model_a == model_b,
        format!("two runs: {} sweep CSV bytes each, identical = {}, model files identical = {}", a.len(), a == b, model_a == model_b),
    )
}

fn traffic_fines_config() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("TRAFFIC_FINES_CONFIG") {
        return Some(PathBuf::from(p));
    }
    let default = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/traffic_fines.toml");
    default.exists().then_some(default)
}

fn c10_traffic_fines() -> Verdict {
    let Some(path) = traffic_fines_config() else {
        return Verdict::Skip("no traffic_fines config (set TRAFFIC_FINES_CONFIG or add data/traffic_fines.toml)".into());
    };
    let config = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(format!("{}: {e}", path.display())),
    };
    match prepare(&config) {
        Ok(p) => {
            let s = p.stats;
            check(
                s.n_traces == 129_615
                    && (s.class_ratio - 0.46).abs() <= 0.01
                    && s.median_length == 4
                    && s.max_length == 5,
                format!(
                    "{} traces, class ratio {:.3}, lengths min {} median {} max {}",
                    s.n_traces, s.class_ratio, s.min_length, s.median_length, s.max_length
                ),
            )
        }
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn main() {
    // libtest flags such as --nocapture or a name filter are accepted and ignored
    let mut results: Vec<(&str, &str, Verdict)> = Vec::new();
    results.push(("1", "cost-oracle equivalence", c1_cost_oracle()));

    let started = Instant::now();
    let fx = Fixture::new(0.5);
    let setup = started.elapsed();
    results.push(("2", "thresholding dominance on the thresholding log", c2_thres_dominance(&fx, setup)));
    results.push(("3", "test-set behaviour at 1:1 and 20:1", c3_test_behaviour(&fx)));
    results.push(("4", "ROI necessary condition", c4_roi_condition(&fx)));
    results.push(("5", "benefit grows with effectiveness", c5_benefit_vs_eff(&fx)));
    results.push(("6", "compensation lowers benefit", c6_compensation(&fx)));
    results.push(("7", "gradient check", c7_gradient()));
    results.push(("8", "estimator quality", c8_estimator_quality()));
    results.push(("9", "determinism", c9_determinism()));
    results.push(("10", "traffic_fines statistics (optional)", c10_traffic_fines()));

    let mut failed = 0;
    for (id, name, verdict) in &results {
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] criterion {id:>2} {name}: {detail}");
    }
    println!("acceptance: {} criteria, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
