//! End-to-end experiments: data preparation, training, thresholding, test-set
//! evaluation against baselines, and cost-configuration sweeps.

mod synthetic;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alarm_engine::{log_cost_cached, AlarmError, AlarmPolicy, CostReport, CostSummary, PredictionCache};
use crate::cost_model::{compile, CostError, CostForm, CostSpec};
use crate::encoding::{fit_schema, EncodingError};
use crate::estimator::{
    candidate_grid, make_training_set, roc_auc, select_best, Estimator, EstimatorError, Hyperparams, Learner,
};
use crate::event_log::{
    cut_trivially_known, impute_missing, parse_log, truncate_log, CategoryFolding, EventLog, LogError, LogSchema,
    LogStats, SplitFractions,
};
use crate::thresholding::{find_global_threshold_cached, ThresholdError, ThresholdSearchResult, DEFAULT_RESOLUTION};

pub use synthetic::{generate_synthetic, synthetic_schema, SyntheticSpec};

/// Failure of one pipeline stage; the display text starts with the stage name.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("generate: {0}")]
    Generate(String),
    #[error("prepare: {0}")]
    Prepare(#[from] LogError),
    #[error("encode: {0}")]
    Encode(#[from] EncodingError),
    #[error("train: {0}")]
    Train(#[from] EstimatorError),
    #[error("cost model: {0}")]
    Cost(#[from] CostError),
    #[error("threshold: {0}")]
    Threshold(#[from] ThresholdError),
    #[error("evaluate: {0}")]
    Evaluate(#[from] AlarmError),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf, schema: LogSchema },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    /// Nearest-rank percentile of trace lengths to truncate at; `None` keeps full traces.
    pub percentile: Option<f64>,
    /// Categorical values seen fewer times in the training log become `other`.
    pub min_count: usize,
    /// Activities that reveal the outcome; traces are cut right before the first one.
    pub trigger_rules: Vec<String>,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            percentile: Some(90.0),
            min_count: 10,
            trigger_rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub learner: Learner,
    /// Number of hyperparameter settings tried; 1 trains the defaults directly.
    pub budget: usize,
    /// Fixed hyperparameters; when set, no search is run.
    pub hyperparams: Option<Hyperparams>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            learner: Learner::Gbt,
            budget: 1,
            hyperparams: None,
        }
    }
}

/// Cost grids swept per research question. `com` holds absolute compensation
/// costs with `c_in = 1`, so they double as `c_com : c_in` ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrids {
    /// `c_out : c_in` ratios.
    pub ratios: Vec<f64>,
    pub eff: Vec<f64>,
    pub com: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            ratios: vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0],
            eff: (0..=10).map(|i| i as f64 / 10.0).collect(),
            com: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
        }
    }
}

fn default_dataset() -> String {
    "synthetic".into()
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

/// Cost model used by the single-configuration commands: `c_in = 1`,
/// `c_out = 5`, no compensation, effectiveness decaying linearly over the case.
pub fn default_cost_spec() -> CostSpec {
    decay_spec(5.0, 0.0)
}

fn decay_spec(ratio: f64, com: f64) -> CostSpec {
    CostSpec {
        eff: CostForm::LinearPrefixDecay { base: 1.0 },
        ..CostSpec::constant(1.0, ratio, com, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_dataset")]
    pub dataset: String,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_cost_spec")]
    pub cost: CostSpec,
    #[serde(default)]
    pub sweep: SweepGrids,
}

impl ExperimentConfig {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            dataset: default_dataset(),
            seed: spec.seed,
            data: DataSource::Synthetic(spec),
            preprocessing: Preprocessing::default(),
            split: SplitFractions::default(),
            estimator: EstimatorConfig::default(),
            resolution: DEFAULT_RESOLUTION,
            cost: default_cost_spec(),
            sweep: SweepGrids::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config; a relative CSV path is resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml_str(&text)?;
        if let DataSource::Csv { path: csv, .. } = &mut config.data {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to toml")
    }

    /// Replaces the experiment seed, including the generator seed of synthetic data.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let DataSource::Synthetic(spec) = &mut self.data {
            spec.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(ExperimentError::Config(msg.to_string()));
        if self.sweep.ratios.is_empty() || self.sweep.eff.is_empty() || self.sweep.com.is_empty() {
            return bad("sweep grids must be non-empty");
        }
        if self.sweep.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("sweep ratios must be positive");
        }
        if self.sweep.eff.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return bad("sweep eff values must be in [0, 1]");
        }
        if self.sweep.com.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("sweep com values must be >= 0");
        }
        if self.resolution < 2 {
            return bad("resolution must be at least 2");
        }
        if self.estimator.budget == 0 {
            return bad("estimator budget must be at least 1");
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        self.cost.validate()?;
        Ok(())
    }
}

/// Loads the raw log named by the config.
pub fn load_log(config: &ExperimentConfig) -> Result<EventLog> {
    match &config.data {
        DataSource::Synthetic(spec) => generate_synthetic(spec),
        DataSource::Csv { path, schema } => {
            let file = fs::File::open(path).map_err(io_err(path))?;
            Ok(parse_log(std::io::BufReader::new(file), schema)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedLogs {
    pub train: EventLog,
    pub thres: EventLog,
    pub test: EventLog,
    /// Statistics of the whole log after cutting and truncation, before the split.
    pub stats: LogStats,
    pub folding: CategoryFolding,
    pub test_start: f64,
    pub warnings: Vec<String>,
}

/// Cuts trivially known outcomes, truncates long traces and imputes missing values
/// on the whole log, splits it temporally, then folds rare categories using counts
/// from the training log only.
pub fn prepare_log(log: &EventLog, config: &ExperimentConfig) -> Result<PreparedLogs> {
    let pre = &config.preprocessing;
    let mut log = cut_trivially_known(log, &pre.trigger_rules);
    if let Some(pct) = pre.percentile {
        log = truncate_log(&log, pct)?;
    }
    let log = impute_missing(&log);
    let stats = log.stats();
    let split = crate::event_log::temporal_split(&log, config.split, config.seed)?;
    if let Some(w) = split.warnings.first() {
        return Err(LogError::Split(w.clone()).into());
    }
    let folding = CategoryFolding::fit(&split.train, pre.min_count);
    Ok(PreparedLogs {
        train: folding.apply(&split.train),
        thres: folding.apply(&split.thres),
        test: folding.apply(&split.test),
        stats,
        folding,
        test_start: split.test_start,
        warnings: split.warnings,
    })
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedLogs> {
    prepare_log(&load_log(config)?, config)
}

/// Fits the encoding on the training log, searches hyperparameters (boosted trees
/// only) and trains the final estimator on every training prefix.
pub fn train_estimator(config: &ExperimentConfig, train: &EventLog) -> Result<Estimator> {
    let schema = fit_schema(train)?;
    let set = make_training_set(train, &schema)?;
    let est = &config.estimator;
    let (hp, fold_scores) = match (&est.hyperparams, est.learner) {
        (Some(hp), _) => (
            Hyperparams {
                rng_seed: config.seed,
                ..hp.clone()
            },
            Vec::new(),
        ),
        (None, Learner::Logistic) => (
            Hyperparams {
                rng_seed: config.seed,
                ..Hyperparams::default()
            },
            Vec::new(),
        ),
        (None, Learner::Gbt) => {
            let tuning = select_best(&set, candidate_grid(est.budget, config.seed)?, config.seed)?;
            let scores = tuning.best_fold_scores().to_vec();
            (tuning.best, scores)
        }
    };
    let mut estimator = Estimator::train(schema, &set, est.learner, &hp)?;
    estimator.metadata.fold_scores = fold_scores;
    Ok(estimator)
}

/// ROC-AUC of an estimator over every proper prefix of a log.
pub fn prefix_auc(log: &EventLog, cache: &PredictionCache) -> Option<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, trace) in log.iter().enumerate() {
        for &p in cache.trace_scores(i) {
            scores.push(p);
            labels.push(trace.outcome());
        }
    }
    roc_auc(&scores, &labels)
}

pub const OPTIMIZED: &str = "optimized";

/// The fitted policy followed by the baselines it is compared against.
pub fn comparison_policies(optimized: &AlarmPolicy) -> Vec<(String, AlarmPolicy)> {
    vec![
        (OPTIMIZED.to_string(), optimized.clone()),
        ("never".to_string(), AlarmPolicy::Never),
        ("tau_0".to_string(), AlarmPolicy::global(0.0)),
        ("tau_0.5".to_string(), AlarmPolicy::global(0.5)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub name: String,
    pub policy: AlarmPolicy,
    pub thres: CostSummary,
    pub test: CostSummary,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub prepared: PreparedLogs,
    pub estimator: Estimator,
    pub threshold: ThresholdSearchResult,
    /// Per-case costs of the optimized policy on the test log.
    pub test_report: CostReport,
    pub evaluations: Vec<PolicyEvaluation>,
    pub test_auc: Option<f64>,
}

/// Scores an estimator's policies on the thresholding and test logs.
pub fn evaluate_policies(
    prepared: &PreparedLogs,
    thres_cache: &PredictionCache,
    test_cache: &PredictionCache,
    cost: &CostSpec,
    optimized: &AlarmPolicy,
) -> Result<(Vec<PolicyEvaluation>, CostReport)> {
    let cm = compile(cost.clone())?;
    let mut evaluations = Vec::new();
    let mut optimized_report = None;
    for (name, policy) in comparison_policies(optimized) {
        let thres = log_cost_cached(&prepared.thres, thres_cache, &policy, &cm)?;
        let test = log_cost_cached(&prepared.test, test_cache, &policy, &cm)?;
        evaluations.push(PolicyEvaluation {
            name: name.clone(),
            policy,
            thres: thres.summary,
            test: test.summary.clone(),
        });
        if name == OPTIMIZED {
            optimized_report = Some(test);
        }
    }
    Ok((evaluations, optimized_report.expect("optimized policy is evaluated")))
}

/// Prepare, train, fit the global threshold on the thresholding log and evaluate
/// it on the test log against never alarming, `tau = 0` and `tau = 0.5`.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let prepared = prepare(config)?;
    let estimator = train_estimator(config, &prepared.train)?;
    let thres_cache = PredictionCache::build(&prepared.thres, &estimator);
    let test_cache = PredictionCache::build(&prepared.test, &estimator);
    let cm = compile(config.cost.clone())?;
    let threshold = find_global_threshold_cached(&prepared.thres, &thres_cache, &cm, config.resolution)?;
    let (evaluations, test_report) =
        evaluate_policies(&prepared, &thres_cache, &test_cache, &config.cost, &threshold.best_policy)?;
    let test_auc = prefix_auc(&prepared.test, &test_cache);
    Ok(PipelineOutput {
        prepared,
        estimator,
        threshold,
        test_report,
        evaluations,
        test_auc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResearchQuestion {
    /// Vary `c_out : c_in` with decaying effectiveness and no compensation.
    Rq1,
    /// Vary constant effectiveness against the ratios.
    Rq2,
    /// Vary compensation cost against the ratios with decaying effectiveness.
    Rq3,
}

impl ResearchQuestion {
    pub const ALL: [ResearchQuestion; 3] = [ResearchQuestion::Rq1, ResearchQuestion::Rq2, ResearchQuestion::Rq3];
}

impl fmt::Display for ResearchQuestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResearchQuestion::Rq1 => "rq1",
            ResearchQuestion::Rq2 => "rq2",
            ResearchQuestion::Rq3 => "rq3",
        })
    }
}

impl FromStr for ResearchQuestion {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rq1" => Ok(ResearchQuestion::Rq1),
            "rq2" => Ok(ResearchQuestion::Rq2),
            "rq3" => Ok(ResearchQuestion::Rq3),
            other => Err(ExperimentError::Config(format!("unknown research question {other:?}"))),
        }
    }
}

/// Label written in the `eff` column for linearly decaying effectiveness.
pub const EFF_DECAY_LABEL: &str = "1-k/n";

/// One cost configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub ratio: f64,
    /// `None` for effectiveness decaying as `1 - k/|trace|`.
    pub eff: Option<f64>,
    pub com: f64,
}

impl SweepCell {
    pub fn cost_spec(&self) -> CostSpec {
        match self.eff {
            Some(eff) => CostSpec::constant(1.0, self.ratio, self.com, eff),
            None => decay_spec(self.ratio, self.com),
        }
    }
}

pub fn sweep_cells(grids: &SweepGrids, rq: ResearchQuestion) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &ratio in &grids.ratios {
        match rq {
            ResearchQuestion::Rq1 => cells.push(SweepCell { ratio, eff: None, com: 0.0 }),
            ResearchQuestion::Rq2 => {
                cells.extend(grids.eff.iter().map(|&e| SweepCell { ratio, eff: Some(e), com: 0.0 }))
            }
            ResearchQuestion::Rq3 => cells.extend(grids.com.iter().map(|&com| SweepCell { ratio, eff: None, com })),
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub ratio: f64,
    pub eff: String,
    pub com: f64,
    pub policy: String,
    pub avg_cost: f64,
    pub benefit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rq: ResearchQuestion,
    pub rows: Vec<SweepRow>,
    /// Threshold policy fitted per cell, in cell order.
    pub policies: Vec<AlarmPolicy>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            writer.serialize(row).expect("in-memory csv");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Row of one policy in one cell, if present.
    pub fn find(&self, ratio: f64, eff: &str, com: f64, policy: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.ratio == ratio && r.eff == eff && r.com == com && r.policy == policy)
    }
}

/// Label for a constant effectiveness value in the `eff` column.
pub fn eff_label(eff: Option<f64>) -> String {
    eff.map_or_else(|| EFF_DECAY_LABEL.to_string(), |e| e.to_string())
}

/// For every cost cell: fit the global threshold on the thresholding log, then
/// cost the fitted policy and the baselines on the test log. The estimator and
/// its predictions are shared by all cells.
pub fn run_sweep_cached(
    config: &ExperimentConfig,
    prepared: &PreparedLogs,
    thres_cache: &PredictionCache,
    test_cache: &PredictionCache,
    rq: ResearchQuestion,
) -> Result<SweepReport> {
    config.validate()?;
    let cells = sweep_cells(&config.sweep, rq);
    let per_cell = cells
        .par_iter()
        .map(|cell| {
            let cm = compile(cell.cost_spec())?;
            let search = find_global_threshold_cached(&prepared.thres, thres_cache, &cm, config.resolution)?;
            let mut rows = Vec::new();
            for (name, policy) in comparison_policies(&search.best_policy) {
                let report = log_cost_cached(&prepared.test, test_cache, &policy, &cm)?;
                rows.push(SweepRow {
                    dataset: config.dataset.clone(),
                    ratio: cell.ratio,
                    eff: eff_label(cell.eff),
                    com: cell.com,
                    policy: name,
                    avg_cost: report.summary.avg_cost,
                    benefit: report.summary.benefit,
                });
            }
            Ok((rows, search.best_policy))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, policies): (Vec<Vec<SweepRow>>, Vec<AlarmPolicy>) = per_cell.into_iter().unzip();
    Ok(SweepReport {
        rq,
        rows: rows.into_iter().flatten().collect(),
        policies,
    })
}

pub fn run_sweep(
    config: &ExperimentConfig,
    prepared: &PreparedLogs,
    estimator: &Estimator,
    rq: ResearchQuestion,
) -> Result<SweepReport> {
    let thres_cache = PredictionCache::build(&prepared.thres, estimator);
    let test_cache = PredictionCache::build(&prepared.test, estimator);
    run_sweep_cached(config, prepared, &thres_cache, &test_cache, rq)
}

/// Plain-text table of policy costs on both evaluation logs.
pub fn format_summary(evaluations: &[PolicyEvaluation], test_auc: Option<f64>) -> String {
    let mut out = String::new();
    if let Some(auc) = test_auc {
        out.push_str(&format!("test prefix AUC: {auc:.4}\n"));
    }
    out.push_str(&format!(
        "{:<10} {:<24} {:>12} {:>12} {:>12} {:>8} {:>8} {:>8} {:>8}\n",
        "policy", "rule", "thres_avg", "test_avg", "test_benefit", "und&al", "des&al", "und&nal", "des&nal"
    ));
    for e in evaluations {
        let c = &e.test.counts;
        out.push_str(&format!(
            "{:<10} {:<24} {:>12.4} {:>12.4} {:>12.4} {:>8} {:>8} {:>8} {:>8}\n",
            e.name,
            e.policy.label(),
            e.thres.avg_cost,
            e.test.avg_cost,
            e.test.benefit,
            c.undesired_alarmed,
            c.desired_alarmed,
            c.undesired_not_alarmed,
            c.desired_not_alarmed
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::synthetic(SyntheticSpec {
            n_cases: 300,
            signal_strength: 0.8,
            seed: 3,
            ..Default::default()
        });
        config.estimator.hyperparams = Some(Hyperparams {
            n_trees: 20,
            ..Default::default()
        });
        config.sweep = SweepGrids {
            ratios: vec![1.0, 20.0],
            eff: vec![0.0, 1.0],
            com: vec![0.0, 5.0, 20.0],
        };
        config
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let config = small_config();
        let parsed = ExperimentConfig::from_toml_str(&config.to_toml_string()).unwrap();
        assert_eq!(parsed, config);

        let minimal = r#"
            [data]
            source = "synthetic"
            n_cases = 100
            class_ratio = 0.4
            min_length = 2
            median_length = 4
            max_length = 8
            signal_strength = 0.5
        "#;
        let config = ExperimentConfig::from_toml_str(minimal).unwrap();
        assert_eq!(config.sweep, SweepGrids::default());
        assert_eq!(config.resolution, DEFAULT_RESOLUTION);
        assert_eq!(config.split, SplitFractions::default());

        let bad = format!("{minimal}\n[sweep]\nratios = []\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(ExperimentError::Config(_))));
        assert!(ExperimentConfig::from_toml_str("seed = 1").is_err());
    }

    #[test]
    fn research_question_parsing() {
        assert_eq!("RQ2".parse::<ResearchQuestion>().unwrap(), ResearchQuestion::Rq2);
        assert!(matches!("rq4".parse::<ResearchQuestion>(), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn sweep_row_counts() {
        let grids = SweepGrids::default();
        assert_eq!(sweep_cells(&grids, ResearchQuestion::Rq1).len(), 6);
        assert_eq!(sweep_cells(&grids, ResearchQuestion::Rq2).len(), 6 * 11);
        assert_eq!(sweep_cells(&grids, ResearchQuestion::Rq3).len(), 6 * 10);
    }

    #[test]
    fn pipeline_and_sweep_on_small_log() {
        let config = small_config();
        let out = run_pipeline(&config).unwrap();
        assert_eq!(out.evaluations.len(), 4);
        assert_eq!(out.evaluations[0].name, OPTIMIZED);
        let opt = &out.evaluations[0];
        for e in &out.evaluations[1..] {
            assert!(opt.thres.total_cost <= e.thres.total_cost);
        }
        assert_eq!(out.test_report.summary, opt.test);

        let report = run_sweep(&config, &out.prepared, &out.estimator, ResearchQuestion::Rq3).unwrap();
        assert_eq!(report.rows.len(), 2 * 3 * 4);
        for row in &report.rows {
            let as_is = report
                .find(row.ratio, &row.eff, row.com, "never")
                .map(|r| r.avg_cost)
                .unwrap();
            assert!((row.benefit - (as_is - row.avg_cost)).abs() < 1e-9);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("dataset,ratio,eff,com,policy,avg_cost,benefit\n"));
        assert_eq!(csv.lines().count(), 1 + report.rows.len());
    }

    #[test]
    fn empty_partition_is_an_error() {
        let mut config = small_config();
        if let DataSource::Synthetic(spec) = &mut config.data {
            spec.n_cases = 2;
        }
        assert!(matches!(prepare(&config), Err(ExperimentError::Prepare(_))));
    }
}
