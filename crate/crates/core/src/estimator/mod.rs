//! Outcome estimators: probabilistic classifiers over encoded prefixes.
//!
//! A single classifier is trained on every proper prefix of every training trace,
//! each labelled with its trace's outcome. Predictions are likelihoods of the
//! undesired outcome in `[0, 1]`; they are used uncalibrated since the alarm
//! threshold is fitted empirically afterwards.

pub mod gbt;
pub mod logistic;
pub mod metrics;
mod tuning;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncodingError, EncodingSchema};
use crate::event_log::{prefix, EventLog, Prefix};

pub use gbt::GbtModel;
pub use logistic::LogisticModel;
pub use metrics::roc_auc;
pub use tuning::{
    candidate_grid, case_folds, cross_validate, select_best, tune_hyperparams, CandidateScore,
    TuningResult, CV_FOLDS,
};

pub const MODEL_FORMAT: &str = "alarm-monitor-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("training labels contain a single class; refusing to fit a constant estimator")]
    SingleClass,
    #[error("training set has no rows (no trace longer than one event)")]
    NoRows,
    #[error("search budget must be at least 1")]
    ZeroBudget,
    #[error("no cross-validation fold had both classes")]
    NoUsableFolds,
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub rng_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 4,
            min_samples_leaf: 10,
            subsample: 0.8,
            rng_seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(EstimatorError::InvalidHyperparams(msg.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        Ok(())
    }
}

/// Row-major feature matrix with labels and the trace each row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub width: usize,
    pub features: Vec<f64>,
    /// 1.0 for the undesired outcome, 0.0 otherwise.
    pub labels: Vec<f64>,
    /// Index of the source trace, used to keep cases together across folds.
    pub groups: Vec<usize>,
}

impl TrainingSet {
    pub fn new(width: usize, features: Vec<f64>, labels: Vec<f64>, groups: Vec<usize>) -> Self {
        assert_eq!(features.len(), width * labels.len(), "feature matrix shape");
        assert_eq!(labels.len(), groups.len(), "one group per row");
        Self {
            width,
            features,
            labels,
            groups,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Self {
            width: self.width,
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            groups: rows.iter().map(|&r| self.groups[r]).collect(),
        }
    }
}

/// One row per proper prefix `hd^k`, `1 <= k <= |trace| - 1`, labelled with the
/// trace outcome.
pub fn make_training_set(log: &EventLog, schema: &EncodingSchema) -> Result<TrainingSet> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (idx, trace) in log.iter().enumerate() {
        for k in 1..trace.len() {
            let p = prefix(trace, k).expect("k within trace");
            schema.encode_into(&p, &mut features);
            labels.push(if trace.outcome() { 1.0 } else { 0.0 });
            groups.push(idx);
        }
    }
    if labels.is_empty() {
        return Err(EstimatorError::NoRows);
    }
    Ok(TrainingSet::new(schema.width(), features, labels, groups))
}

/// Anything that can score a prefix with an undesired-outcome likelihood.
pub trait OutcomeEstimator: Sync {
    fn likelihood(&self, prefix: &Prefix<'_>) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    #[default]
    Gbt,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Model {
    Gbt(GbtModel),
    Logistic(LogisticModel),
}

impl Model {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Model::Gbt(m) => m.predict_proba(x),
            Model::Logistic(m) => m.predict_proba(x),
        }
    }
}

/// Boosted trees on a prepared training set.
pub fn train_gbt(set: &TrainingSet, hp: &Hyperparams) -> Result<GbtModel> {
    gbt::fit(set, hp).map(|(model, _)| model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub learner: Learner,
    pub hyperparams: Hyperparams,
    pub n_rows: usize,
    /// Mean training loss after the initial score and after each boosting stage.
    #[serde(default)]
    pub train_loss: Vec<f64>,
    /// Cross-validated AUC per fold of the selected hyperparameters, if tuned.
    #[serde(default)]
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub schema: EncodingSchema,
    pub model: Model,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    estimator: Estimator,
}

impl Estimator {
    pub fn train(
        schema: EncodingSchema,
        set: &TrainingSet,
        learner: Learner,
        hp: &Hyperparams,
    ) -> Result<Self> {
        let (model, train_loss) = match learner {
            Learner::Gbt => {
                let (m, loss) = gbt::fit(set, hp)?;
                (Model::Gbt(m), loss)
            }
            Learner::Logistic => (Model::Logistic(logistic::fit(set)?), Vec::new()),
        };
        Ok(Self {
            schema,
            model,
            metadata: TrainingMetadata {
                learner,
                hyperparams: hp.clone(),
                n_rows: set.n_rows(),
                train_loss,
                fold_scores: Vec::new(),
            },
        })
    }

    pub fn predict_features(&self, x: &[f64]) -> f64 {
        self.model.predict_proba(x)
    }

    pub fn predict(&self, prefix: &Prefix<'_>) -> f64 {
        self.predict_features(self.schema.encode(prefix).as_slice())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            estimator: self.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| EstimatorError::ModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(EstimatorError::ModelFile(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        Ok(file.estimator)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl OutcomeEstimator for Estimator {
    fn likelihood(&self, prefix: &Prefix<'_>) -> f64 {
        self.predict(prefix)
    }
}

/// `out(hd^k(trace))` under a trained estimator.
pub fn predict(estimator: &Estimator, prefix: &Prefix<'_>) -> f64 {
    estimator.predict(prefix)
}
