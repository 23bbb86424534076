//! Reference scorers: nearest-anchor similarity and a logistic head on the
//! embedding alone.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::{bce_with_logit, row_norms, sigmoid};
use crate::optim::{Adam, AdamConfig, EarlyStop};
use crate::saam::{AnchorBank, SaamConfig};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K }
    }
}

/// Mean cosine to the `k` most similar positive anchors minus the same for
/// negative anchors. `k` is clamped to each class size.
pub fn knn_score(x: &[f64], bank: &AnchorBank, config: &KnnConfig) -> Result<f64> {
    let xm = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
    Ok(knn_scores(xm, bank, config)?[0])
}

pub fn knn_scores(x: ArrayView2<f64>, bank: &AnchorBank, config: &KnnConfig) -> Result<Vec<f64>> {
    if config.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if !bank.has_both_classes() {
        return Err(Error::DegenerateLabels);
    }
    if x.ncols() != bank.dim() {
        return Err(Error::DimMismatch {
            expected: bank.dim(),
            actual: x.ncols(),
        });
    }
    let bank_norms = row_norms(bank.view());
    if bank_norms.contains(&0.0) {
        return Err(Error::ZeroVector);
    }
    let pos: Vec<usize> = (0..bank.len())
        .filter(|&i| bank.labels[i].is_positive())
        .collect();
    let neg: Vec<usize> = (0..bank.len())
        .filter(|&i| !bank.labels[i].is_positive())
        .collect();
    x.axis_iter(Axis(0))
        .map(|row| {
            let xn = row.dot(&row).sqrt();
            if xn == 0.0 {
                return Err(Error::ZeroVector);
            }
            let cos =
                |i: usize| (row.dot(&bank.rows.row(i)) / (xn * bank_norms[i])).clamp(-1.0, 1.0);
            Ok(top_mean(&pos, config.k, cos) - top_mean(&neg, config.k, cos))
        })
        .collect()
}

fn top_mean(idx: &[usize], k: usize, cos: impl Fn(usize) -> f64) -> f64 {
    let mut sims: Vec<(f64, usize)> = idx.iter().map(|&i| (cos(i), i)).collect();
    // largest first, ties by ascending index
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let k = k.min(sims.len());
    sims[..k].iter().map(|s| s.0).sum::<f64>() / k as f64
}

/// Map a score in [-2, 2] onto [0, 1] for thresholding and PR curves.
pub fn knn_probability(score: f64) -> f64 {
    ((score + 2.0) / 4.0).clamp(0.0, 1.0)
}

/// Logistic regression on the embedding, with no anchor context.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticHead {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl LogisticHead {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.nrows() > 0 && x.ncols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok(x.axis_iter(Axis(0))
            .map(|r| sigmoid(self.logit(r)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub head: LogisticHead,
    pub loss_trace: Vec<f64>,
}

fn head_loss_and_grad(params: &[f64], x: ArrayView2<f64>, y: &Array1<f64>) -> (f64, Vec<f64>) {
    let d = x.ncols();
    let w = ArrayView1::from(&params[..d]);
    let z = x.dot(&w) + params[d];
    let n = x.nrows() as f64;
    let loss = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| bce_with_logit(z, y))
        .sum::<f64>()
        / n;
    let dz: Array1<f64> = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| (sigmoid(z) - y) / n)
        .collect();
    let mut grad = x.t().dot(&dz).to_vec();
    grad.push(dz.sum());
    (loss, grad)
}

/// Train the attention-free head with the same optimizer and schedule as the
/// attention model. The start point is fixed, so the result does not depend
/// on the seed.
pub fn no_attention_baseline(bank: &AnchorBank, config: &SaamConfig) -> Result<TrainedHead> {
    if !bank.has_both_classes() {
        return Err(Error::DegenerateLabels);
    }
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1), got {}",
            config.threshold
        )));
    }
    // zero start, like the attention model's head
    let mut params = vec![0.0; bank.dim() + 1];
    let y = bank.targets();
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        params.len(),
    );
    let mut stop = EarlyStop::new(config.patience, config.min_delta);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let (loss, grad) = head_loss_and_grad(&params, bank.view(), &y);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(loss);
        if epoch == config.epochs || stop.observe(loss) {
            break;
        }
        adam.step(&mut params, &grad, None);
    }
    let bias = params.pop().expect("bias present");
    Ok(TrainedHead {
        head: LogisticHead {
            weights: Array1::from(params),
            bias,
            threshold: config.threshold,
        },
        loss_trace: trace,
    })
}
