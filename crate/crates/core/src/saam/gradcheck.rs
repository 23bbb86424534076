use rand_distr::{Distribution, Normal};

use super::forward::{loss, loss_and_grad};
use super::train::init_model;
use super::{AnchorBank, SaamConfig, SaamModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::Result;

const GRADCHECK_TAG: u64 = 0x5AA3_0002;
const PARAM_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub frozen: Vec<bool>,
}

impl GradCheckReport {
    /// Index of the parameter with the largest relative error.
    pub fn worst_index(&self) -> Option<usize> {
        (0..self.analytic.len())
            .filter(|&i| !self.frozen[i])
            .max_by(|&a, &b| self.rel_error(a).total_cmp(&self.rel_error(b)))
    }

    pub fn rel_error(&self, i: usize) -> f64 {
        rel_error(self.analytic[i], self.numeric[i])
    }
}

fn rel_error(ga: f64, gf: f64) -> f64 {
    (ga - gf).abs() / (ga.abs() + gf.abs()).max(1e-8)
}

/// Compare analytic and central-difference gradients of the training loss
/// at the current parameters of `model`. Frozen entries report zero in both.
pub fn gradcheck_at(
    model: &SaamModel,
    bank: &AnchorBank,
    exclude_self: bool,
    eps: f64,
) -> Result<GradCheckReport> {
    let layout = &model.layout;
    let (_, analytic) = loss_and_grad(layout, &model.params, bank, exclude_self)?;
    let frozen = layout.frozen_mask();
    let mut numeric = vec![0.0; analytic.len()];
    let mut params = model.params.clone();
    for i in 0..params.len() {
        if frozen[i] {
            continue;
        }
        let orig = params[i];
        params[i] = orig + eps;
        let up = loss(layout, &params, bank, exclude_self)?;
        params[i] = orig - eps;
        let down = loss(layout, &params, bank, exclude_self)?;
        params[i] = orig;
        numeric[i] = (up - down) / (2.0 * eps);
    }
    let max_rel_error = (0..analytic.len())
        .filter(|&i| !frozen[i])
        .map(|i| rel_error(analytic[i], numeric[i]))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        analytic,
        numeric,
        frozen,
    })
}

/// Gradient check on a randomized model: every trainable parameter is drawn
/// afresh so no gradient path is masked by zero-initialized blocks.
pub fn finite_diff_gradcheck(
    bank: &AnchorBank,
    config: &SaamConfig,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut model = init_model(bank, config)?;
    let frozen = model.layout.frozen_mask();
    let mut rng = rng_from_seed(derive_seed(config.seed, GRADCHECK_TAG));
    let normal = Normal::new(0.0, PARAM_SCALE).expect("valid scale");
    for (p, &f) in model.params.iter_mut().zip(&frozen) {
        if !f {
            *p = normal.sample(&mut rng);
        }
    }
    gradcheck_at(&model, bank, config.exclude_self, eps)
}
