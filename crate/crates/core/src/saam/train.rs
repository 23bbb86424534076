use ndarray::ArrayView2;

use super::forward::{logits, loss_and_grad, probability};
use super::params::ParamLayout;
use super::{AnchorBank, SaamConfig, SaamModel};
use crate::optim::{Adam, AdamConfig, EarlyStop};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

const INIT_TAG: u64 = 0x5AA3_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: SaamModel,
    /// Training loss before each update, plus the final loss.
    pub loss_trace: Vec<f64>,
}

impl TrainedModel {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace is never empty")
    }
}

/// Freshly initialized model for `bank` under `config`.
pub(crate) fn init_model(bank: &AnchorBank, config: &SaamConfig) -> Result<SaamModel> {
    config.validate(bank.dim())?;
    let layout = ParamLayout::from_config(config, bank.dim(), bank.len());
    let mut rng = rng_from_seed(derive_seed(config.seed, INIT_TAG));
    let params = layout.init(&mut rng);
    Ok(SaamModel {
        layout,
        params,
        threshold: config.threshold,
    })
}

/// Full-batch Adam on the mean binary cross-entropy of every anchor scored
/// against the bank.
pub fn train(bank: &AnchorBank, config: &SaamConfig) -> Result<TrainedModel> {
    if !bank.has_both_classes() {
        return Err(Error::DegenerateLabels);
    }
    let mut model = init_model(bank, config)?;
    let frozen = model.layout.frozen_mask();
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        model.params.len(),
    );
    let mut stop = EarlyStop::new(config.patience, config.min_delta);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let (loss, grad) = loss_and_grad(&model.layout, &model.params, bank, config.exclude_self)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        trace.push(loss);
        if epoch == config.epochs || stop.observe(loss) {
            break;
        }
        adam.step(&mut model.params, &grad, Some(&frozen));
    }
    log::debug!(
        "saam {} trained: loss {:.6} -> {:.6} over {} updates",
        config.variant,
        trace[0],
        trace[trace.len() - 1],
        trace.len() - 1
    );
    Ok(TrainedModel {
        model,
        loss_trace: trace,
    })
}

/// Probability of the positive class for every row of `x`.
pub fn predict(model: &SaamModel, bank: &AnchorBank, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        if x.ncols() != 0 && x.ncols() != model.layout.d {
            return Err(Error::DimMismatch {
                expected: model.layout.d,
                actual: x.ncols(),
            });
        }
        return Ok(Vec::new());
    }
    let z = logits(&model.layout, &model.params, x, bank, false)?;
    Ok(z.iter().map(|&z| probability(z)).collect())
}
