//! Gradient boosted regression trees with a logistic link.
//!
//! Each stage fits a histogram-based regression tree to the negative gradient of
//! the logistic loss `log(1 + exp(-(2y - 1) F))`. Splits maximise variance
//! reduction of the residuals; leaf values are Newton steps clipped to
//! `[-LEAF_CLIP, LEAF_CLIP]`, shrunk by the learning rate and halved until the
//! leaf's loss does not increase.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimatorError, Hyperparams, TrainingSet};

pub const LEAF_CLIP: f64 = 4.0;
const MAX_BINS: usize = 64;
const MIN_GAIN: f64 = 1e-12;

pub fn sigmoid(score: f64) -> f64 {
    if score >= 0.0 {
        1.0 / (1.0 + (-score).exp())
    } else {
        let e = score.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-(2y - 1) score))` for a label `y` in `{0, 1}`.
pub fn logistic_loss(label: f64, score: f64) -> f64 {
    let margin = -(2.0 * label - 1.0) * score;
    // softplus, stable for large |margin|
    margin.max(0.0) + (-margin.abs()).exp().ln_1p()
}

/// Negative derivative of [`logistic_loss`] with respect to the score: `y - sigmoid(score)`.
pub fn negative_gradient(label: f64, score: f64) -> f64 {
    label - sigmoid(score)
}

/// Mean logistic loss of `scores` against `labels`.
pub fn mean_loss(labels: &[f64], scores: &[f64]) -> f64 {
    let total: f64 = labels.iter().zip(scores).map(|(&y, &f)| logistic_loss(y, f)).sum();
    total / labels.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub init_score: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.init_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x)).clamp(0.0, 1.0)
    }
}

/// Quantile bin edges per feature. A value `x` falls in bin
/// `#{edges < x}`, so "bin <= b" is equivalent to `x <= edges[b]`.
struct Binner {
    edges: Vec<Vec<f64>>,
}

impl Binner {
    fn fit(set: &TrainingSet) -> Self {
        let edges = (0..set.width)
            .map(|j| {
                let mut column: Vec<f64> = (0..set.n_rows()).map(|i| set.row(i)[j]).collect();
                column.sort_by(f64::total_cmp);
                column.dedup();
                let d = column.len();
                if d <= 1 {
                    return Vec::new();
                }
                let cuts: Vec<usize> = if d <= MAX_BINS {
                    (1..d).collect()
                } else {
                    let mut c: Vec<usize> = (1..MAX_BINS).map(|i| i * d / MAX_BINS).collect();
                    c.dedup();
                    c
                };
                cuts.into_iter()
                    .map(|c| 0.5 * (column[c - 1] + column[c]))
                    .collect()
            })
            .collect();
        Self { edges }
    }

    fn bin(&self, feature: usize, x: f64) -> u8 {
        self.edges[feature].partition_point(|&e| e < x) as u8
    }

    fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }
}

struct Grower<'a> {
    binned: &'a [u8],
    width: usize,
    binner: &'a Binner,
    labels: &'a [f64],
    scores: &'a [f64],
    residuals: &'a [f64],
    hp: &'a Hyperparams,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let split = if depth < self.hp.max_depth && rows.len() >= 2 * self.hp.min_samples_leaf {
            self.best_split(&rows)
        } else {
            None
        };
        let Some(split) = split else {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return self.nodes.len() - 1;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| (self.binned[r as usize * self.width + split.feature] as usize) <= split.bin);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: self.binner.edges[split.feature][split.bin],
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[u32]) -> Option<BestSplit> {
        let total: f64 = rows.iter().map(|&r| self.residuals[r as usize]).sum();
        let n = rows.len();
        let parent = total * total / n as f64;
        let min_leaf = self.hp.min_samples_leaf.max(1);

        let evaluate = |feature: usize| -> Option<BestSplit> {
            let n_bins = self.binner.n_bins(feature);
            if n_bins < 2 {
                return None;
            }
            let mut sums = vec![0.0; n_bins];
            let mut counts = vec![0usize; n_bins];
            for &r in rows {
                let b = self.binned[r as usize * self.width + feature] as usize;
                sums[b] += self.residuals[r as usize];
                counts[b] += 1;
            }
            let mut best: Option<BestSplit> = None;
            let (mut left_sum, mut left_n) = (0.0, 0usize);
            for bin in 0..n_bins - 1 {
                left_sum += sums[bin];
                left_n += counts[bin];
                let right_n = n - left_n;
                if left_n < min_leaf || right_n < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - parent;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit { feature, bin, gain });
                }
            }
            best
        };

        let candidates: Vec<Option<BestSplit>> = if rows.len() > 4096 {
            (0..self.width).into_par_iter().map(evaluate).collect()
        } else {
            (0..self.width).map(evaluate).collect()
        };
        // first feature wins ties, whatever the evaluation order
        candidates.into_iter().flatten().fold(None, |acc: Option<BestSplit>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
    }

    fn leaf_value(&self, rows: &[u32]) -> f64 {
        let (mut grad, mut hess) = (0.0, 0.0);
        for &r in rows {
            let r = r as usize;
            let p = sigmoid(self.scores[r]);
            grad += self.residuals[r];
            hess += p * (1.0 - p);
        }
        let newton = (grad / hess.max(1e-12)).clamp(-LEAF_CLIP, LEAF_CLIP);
        let leaf_loss = |delta: f64| -> f64 {
            rows.iter()
                .map(|&r| logistic_loss(self.labels[r as usize], self.scores[r as usize] + delta))
                .sum()
        };
        let base = leaf_loss(0.0);
        let mut step = self.hp.learning_rate * newton;
        for _ in 0..30 {
            if leaf_loss(step) <= base {
                return step;
            }
            step *= 0.5;
        }
        0.0
    }
}

/// Fits a boosted ensemble. Returns the model and the mean training loss after
/// the initial score and after every stage.
pub fn fit(set: &TrainingSet, hp: &Hyperparams) -> Result<(GbtModel, Vec<f64>), EstimatorError> {
    hp.validate()?;
    let n = set.n_rows();
    let positives = set.labels.iter().filter(|&&y| y > 0.5).count();
    if positives == 0 || positives == n {
        return Err(EstimatorError::SingleClass);
    }
    let prevalence = positives as f64 / n as f64;
    let init_score = (prevalence / (1.0 - prevalence)).ln();

    let binner = Binner::fit(set);
    let mut binned = vec![0u8; n * set.width];
    for i in 0..n {
        let row = set.row(i);
        for j in 0..set.width {
            binned[i * set.width + j] = binner.bin(j, row[j]);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.rng_seed);
    let mut scores = vec![init_score; n];
    let mut loss_history = vec![mean_loss(&set.labels, &scores)];
    let mut trees = Vec::with_capacity(hp.n_trees);
    let n_sample = ((hp.subsample * n as f64).floor() as usize).clamp(1, n);
    for _ in 0..hp.n_trees {
        let residuals: Vec<f64> = set
            .labels
            .iter()
            .zip(&scores)
            .map(|(&y, &f)| negative_gradient(y, f))
            .collect();
        let mut rows: Vec<u32> = if n_sample == n {
            (0..n as u32).collect()
        } else {
            sample(&mut rng, n, n_sample).into_iter().map(|i| i as u32).collect()
        };
        rows.sort_unstable();
        let mut grower = Grower {
            binned: &binned,
            width: set.width,
            binner: &binner,
            labels: &set.labels,
            scores: &scores,
            residuals: &residuals,
            hp,
            nodes: Vec::new(),
        };
        grower.grow(rows, 0);
        let tree = Tree { nodes: grower.nodes };
        for (i, score) in scores.iter_mut().enumerate() {
            *score += tree.predict(set.row(i));
        }
        loss_history.push(mean_loss(&set.labels, &scores));
        trees.push(tree);
    }
    Ok((GbtModel { init_score, trees }, loss_history))
}
