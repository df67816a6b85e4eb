//! Random search over a fixed hyperparameter grid, scored by case-level
//! cross-validated ROC-AUC pooled over all prefixes of a fold.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gbt, make_training_set, metrics::roc_auc, EstimatorError, Hyperparams, Result, TrainingSet};
use crate::encoding::EncodingSchema;
use crate::event_log::EventLog;

pub const CV_FOLDS: usize = 3;

const GRID_TREES: [usize; 3] = [50, 100, 200];
const GRID_LEARNING_RATE: [f64; 3] = [0.05, 0.1, 0.2];
const GRID_DEPTH: [usize; 5] = [2, 3, 4, 5, 6];
const GRID_MIN_LEAF: [usize; 4] = [5, 10, 20, 50];
const GRID_SUBSAMPLE: [f64; 3] = [0.7, 0.85, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub hyperparams: Hyperparams,
    pub fold_aucs: Vec<f64>,
    /// `None` when the candidate was not cross-validated (single-candidate search).
    pub mean_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best: Hyperparams,
    pub candidates: Vec<CandidateScore>,
}

impl TuningResult {
    pub fn best_fold_scores(&self) -> &[f64] {
        self.candidates
            .iter()
            .find(|c| c.hyperparams == self.best)
            .map_or(&[], |c| c.fold_aucs.as_slice())
    }
}

/// The default setting followed by `budget - 1` distinct grid points drawn without
/// replacement. All candidates carry `seed` as their RNG seed.
pub fn candidate_grid(budget: usize, seed: u64) -> Result<Vec<Hyperparams>> {
    if budget == 0 {
        return Err(EstimatorError::ZeroBudget);
    }
    let default = Hyperparams {
        rng_seed: seed,
        ..Hyperparams::default()
    };
    let mut grid = Vec::new();
    for &n_trees in &GRID_TREES {
        for &learning_rate in &GRID_LEARNING_RATE {
            for &max_depth in &GRID_DEPTH {
                for &min_samples_leaf in &GRID_MIN_LEAF {
                    for &subsample in &GRID_SUBSAMPLE {
                        let hp = Hyperparams {
                            n_trees,
                            learning_rate,
                            max_depth,
                            min_samples_leaf,
                            subsample,
                            rng_seed: seed,
                        };
                        if hp != default {
                            grid.push(hp);
                        }
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grid.shuffle(&mut rng);
    let mut out = vec![default];
    out.extend(grid.into_iter().take(budget - 1));
    Ok(out)
}

/// Fold index per row. Traces (groups) are shuffled and dealt round-robin, so all
/// prefixes of one trace land in the same fold.
pub fn case_folds(groups: &[usize], n_folds: usize, seed: u64) -> Vec<usize> {
    let mut distinct: Vec<usize> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let mut fold_of = std::collections::HashMap::with_capacity(distinct.len());
    for (i, g) in distinct.into_iter().enumerate() {
        fold_of.insert(g, i % n_folds);
    }
    groups.iter().map(|g| fold_of[g]).collect()
}

/// AUC on each held-out fold. Folds where training or validation lacks a class are skipped.
pub fn cross_validate(set: &TrainingSet, hp: &Hyperparams, n_folds: usize, seed: u64) -> Result<Vec<f64>> {
    hp.validate()?;
    let folds = case_folds(&set.groups, n_folds, seed);
    let mut scores = Vec::with_capacity(n_folds);
    for fold in 0..n_folds {
        let (valid_rows, train_rows): (Vec<usize>, Vec<usize>) =
            (0..set.n_rows()).partition(|&r| folds[r] == fold);
        if valid_rows.is_empty() || train_rows.is_empty() {
            continue;
        }
        let train = set.subset(&train_rows);
        let model = match gbt::fit(&train, hp) {
            Ok((m, _)) => m,
            Err(EstimatorError::SingleClass) => continue,
            Err(e) => return Err(e),
        };
        let preds: Vec<f64> = valid_rows.iter().map(|&r| model.predict_proba(set.row(r))).collect();
        let labels: Vec<bool> = valid_rows.iter().map(|&r| set.labels[r] > 0.5).collect();
        if let Some(auc) = roc_auc(&preds, &labels) {
            scores.push(auc);
        }
    }
    if scores.is_empty() {
        return Err(EstimatorError::NoUsableFolds);
    }
    Ok(scores)
}

/// Scores every candidate by mean fold AUC; the earliest candidate wins ties.
/// A single candidate is returned without cross-validation.
pub fn select_best(set: &TrainingSet, candidates: Vec<Hyperparams>, seed: u64) -> Result<TuningResult> {
    match candidates.len() {
        0 => return Err(EstimatorError::ZeroBudget),
        1 => {
            let hp = candidates.into_iter().next().expect("one candidate");
            hp.validate()?;
            return Ok(TuningResult {
                best: hp.clone(),
                candidates: vec![CandidateScore {
                    hyperparams: hp,
                    fold_aucs: Vec::new(),
                    mean_auc: None,
                }],
            });
        }
        _ => {}
    }
    let scored: Vec<CandidateScore> = candidates
        .into_par_iter()
        .map(|hp| {
            let fold_aucs = cross_validate(set, &hp, CV_FOLDS, seed)?;
            let mean = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
            Ok(CandidateScore {
                hyperparams: hp,
                fold_aucs,
                mean_auc: Some(mean),
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, c) in scored.iter().enumerate() {
        if c.mean_auc > scored[best].mean_auc {
            best = i;
        }
    }
    Ok(TuningResult {
        best: scored[best].hyperparams.clone(),
        candidates: scored,
    })
}

pub fn tune_hyperparams(
    train_log: &EventLog,
    schema: &EncodingSchema,
    budget: usize,
    seed: u64,
) -> Result<TuningResult> {
    let candidates = candidate_grid(budget, seed)?;
    let set = make_training_set(train_log, schema)?;
    select_best(&set, candidates, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        assert!(matches!(candidate_grid(0, 1), Err(EstimatorError::ZeroBudget)));
        let one = candidate_grid(1, 9).unwrap();
        assert_eq!(one, vec![Hyperparams { rng_seed: 9, ..Default::default() }]);
        let many = candidate_grid(12, 9).unwrap();
        assert_eq!(many.len(), 12);
        let distinct: BTreeSet<String> = many.iter().map(|h| format!("{h:?}")).collect();
        assert_eq!(distinct.len(), 12);
        assert_eq!(many, candidate_grid(12, 9).unwrap());
    }

    #[test]
    fn folds_keep_cases_together() {
        let groups: Vec<usize> = (0..30).flat_map(|g| std::iter::repeat_n(g, 1 + g % 4)).collect();
        let folds = case_folds(&groups, 3, 5);
        for g in 0..30 {
            let fs: BTreeSet<usize> = groups.iter().zip(&folds).filter(|(gg, _)| **gg == g).map(|(_, f)| *f).collect();
            assert_eq!(fs.len(), 1);
        }
        let sizes: Vec<usize> = (0..3).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
        assert!(sizes.iter().all(|&s| s > 0));
    }
}
