//! L2-regularised logistic regression on standardised features.
//! A quick baseline behind the same interface as the boosted trees.

use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use super::{EstimatorError, TrainingSet};

const ITERATIONS: usize = 300;
const STEP: f64 = 0.5;
const L2: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .zip(self.means.iter().zip(&self.scales))
            .fold(self.bias, |s, ((w, v), (m, sd))| s + w * (v - m) / sd)
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x)).clamp(0.0, 1.0)
    }
}

/// Full-batch gradient descent.
pub fn fit(set: &TrainingSet) -> Result<LogisticModel, EstimatorError> {
    let n = set.n_rows();
    let positives = set.labels.iter().filter(|&&y| y > 0.5).count();
    if positives == 0 || positives == n {
        return Err(EstimatorError::SingleClass);
    }
    let width = set.width;
    let mut means = vec![0.0; width];
    for i in 0..n {
        for (m, x) in means.iter_mut().zip(set.row(i)) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut scales = vec![0.0; width];
    for i in 0..n {
        for j in 0..width {
            scales[j] += (set.row(i)[j] - means[j]).powi(2);
        }
    }
    for s in &mut scales {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let prevalence = positives as f64 / n as f64;
    let mut model = LogisticModel {
        means,
        scales,
        weights: vec![0.0; width],
        bias: (prevalence / (1.0 - prevalence)).ln(),
    };
    let mut z = vec![0.0; width];
    for _ in 0..ITERATIONS {
        let mut grad_w = vec![0.0; width];
        let mut grad_b = 0.0;
        for i in 0..n {
            let row = set.row(i);
            for j in 0..width {
                z[j] = (row[j] - model.means[j]) / model.scales[j];
            }
            let err = sigmoid(model.score(row)) - set.labels[i];
            grad_b += err;
            for (g, zj) in grad_w.iter_mut().zip(&z) {
                *g += err * zj;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= STEP * (g / n as f64 + L2 * *w);
        }
        model.bias -= STEP * grad_b / n as f64;
    }
    Ok(model)
}
