use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::SparseVector;

/// Multinomial logistic regression over a hashed feature space.
///
/// `weights` is row-major, one row of `dimension` entries per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    n_labels: usize,
    dimension: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// A featurized example with its gold label index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub label: usize,
}

/// In-place numerically stable softmax.
pub fn softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = libm::exp(*s - max);
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// `log Σ exp(s) - s[gold]`, the cross-entropy of one example.
pub fn cross_entropy(scores: &[f64], gold: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(scores.iter().map(|s| libm::exp(s - max)).sum::<f64>());
    lse - scores[gold]
}

impl SoftmaxRegression {
    pub fn zeros(n_labels: usize, dimension: usize) -> Self {
        Self {
            n_labels,
            dimension,
            weights: alloc::vec![0.0; n_labels * dimension],
            bias: alloc::vec![0.0; n_labels],
        }
    }

    /// Rebuilds a model from a flat parameter vector laid out as by
    /// [`SoftmaxRegression::params`]. Returns `None` on a length mismatch.
    pub fn from_params(n_labels: usize, dimension: usize, params: &[f64]) -> Option<Self> {
        let nw = n_labels * dimension;
        if params.len() != nw + n_labels {
            return None;
        }
        Some(Self {
            n_labels,
            dimension,
            weights: params[..nw].to_vec(),
            bias: params[nw..].to_vec(),
        })
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let nw = self.weights.len();
        if index < nw {
            self.weights[index] = value;
        } else {
            self.bias[index - nw] = value;
        }
    }

    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_labels)
            .map(|c| {
                let row = &self.weights[c * self.dimension..(c + 1) * self.dimension];
                self.bias[c] + x.dot_dense(row)
            })
            .collect()
    }

    pub fn l2_penalty(&self, weight_decay: f64) -> f64 {
        0.5 * weight_decay * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Mean cross-entropy of `batch`, without the weight penalty.
    pub fn data_loss(&self, batch: &[Example]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch.iter().map(|e| cross_entropy(&self.scores(&e.features), e.label)).sum::<f64>()
            / batch.len() as f64
    }

    /// Training objective: mean cross-entropy plus `½·λ·‖W‖²` (biases are
    /// not penalized).
    pub fn objective(&self, batch: &[Example], weight_decay: f64) -> f64 {
        self.data_loss(batch) + self.l2_penalty(weight_decay)
    }

    /// Gradient of [`SoftmaxRegression::objective`], flat in
    /// [`SoftmaxRegression::params`] order.
    pub fn gradient(&self, batch: &[Example], weight_decay: f64) -> Vec<f64> {
        let nw = self.weights.len();
        let mut grad: Vec<f64> = self.weights.iter().map(|w| weight_decay * w).collect();
        grad.resize(nw + self.n_labels, 0.0);
        if batch.is_empty() {
            return grad;
        }
        let scale = 1.0 / batch.len() as f64;
        for e in batch {
            let mut p = self.scores(&e.features);
            softmax(&mut p);
            for (c, pc) in p.iter().enumerate() {
                let g = (pc - if c == e.label { 1.0 } else { 0.0 }) * scale;
                let row = c * self.dimension;
                for &(i, v) in e.features.entries() {
                    grad[row + i as usize] += g * v;
                }
                grad[nw + c] += g;
            }
        }
        grad
    }

    /// One plain gradient-descent step.
    pub fn step(&mut self, batch: &[Example], learning_rate: f64, weight_decay: f64) {
        let grad = self.gradient(batch, weight_decay);
        let nw = self.weights.len();
        for (w, g) in self.weights.iter_mut().zip(&grad[..nw]) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad[nw..]) {
            *b -= learning_rate * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}
