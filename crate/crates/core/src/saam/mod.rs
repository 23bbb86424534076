//! Self-anchored attention model.
//!
//! The labeled anchor set is used twice: as the training set and, for every
//! input, as the bank of keys/values (or similarity features) the input is
//! scored against. Three heads over the bank are available:
//!
//! * `qkv`: learned query, key and value projections, scaled dot-product
//!   attention over the bank, and a logistic head on the context vector;
//! * `k_only`: query and value fixed to the identity, only the key projection
//!   is learned;
//! * `cossim`: cosine similarities to every anchor fed through a one-layer
//!   tanh network.

mod forward;
mod gradcheck;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::adapt::AnchorExample;
use crate::linalg::rows_to_matrix;
use crate::{BinaryLabel, Error, Result};

pub use forward::{attention_forward, cossim_features, AttentionOutput};
pub use gradcheck::{finite_diff_gradcheck, gradcheck_at, GradCheckReport};
pub use params::{Block, ParamLayout};
pub use train::{predict, train, TrainedModel};

#[cfg(test)]
mod tests;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Qkv,
    KOnly,
    Cossim,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Qkv, Variant::KOnly, Variant::Cossim];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Qkv => "qkv",
            Variant::KOnly => "k_only",
            Variant::Cossim => "cossim",
        }
    }

    pub fn is_attention(self) -> bool {
        !matches!(self, Variant::Cossim)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qkv" => Ok(Variant::Qkv),
            "k_only" | "k-only" => Ok(Variant::KOnly),
            "cossim" | "cos-sim" => Ok(Variant::Cossim),
            other => Err(Error::Config(format!("unknown SAAM variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaamConfig {
    pub variant: Variant,
    /// Key width for `qkv` (value width equals it). `k_only` always uses the
    /// embedding width.
    pub d_k: usize,
    pub heads: usize,
    /// Hidden width of the `cossim` network.
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Score each anchor against the bank without itself during training.
    pub exclude_self: bool,
    /// Early stop after this many epochs improving less than `min_delta`;
    /// 0 disables early stopping.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for SaamConfig {
    fn default() -> Self {
        Self {
            variant: Variant::KOnly,
            d_k: 64,
            heads: 1,
            hidden: 32,
            lr: 1e-3,
            epochs: 30,
            seed: 0,
            threshold: 0.5,
            exclude_self: false,
            patience: 5,
            min_delta: 1e-6,
        }
    }
}

impl SaamConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Key width actually used for an embedding width `d`.
    pub fn effective_d_k(&self, d: usize) -> usize {
        match self.variant {
            Variant::Qkv => self.d_k,
            Variant::KOnly => d,
            Variant::Cossim => 0,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.variant.is_attention() {
            let dk = self.effective_d_k(d);
            if dk == 0 || self.heads == 0 {
                return Err(Error::Config("d_k and heads must be positive".into()));
            }
            if !dk.is_multiple_of(self.heads) {
                return Err(Error::Config(format!(
                    "heads={} does not divide d_k={dk}",
                    self.heads
                )));
            }
        } else if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Adapted anchor embeddings with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorBank {
    pub ids: Vec<String>,
    pub labels: Vec<BinaryLabel>,
    pub rows: Array2<f64>,
}

impl AnchorBank {
    pub fn new(ids: Vec<String>, labels: Vec<BinaryLabel>, rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::NoAnchors);
        }
        if ids.len() != rows.nrows() || labels.len() != rows.nrows() {
            return Err(Error::Precondition(format!(
                "bank has {} rows, {} ids and {} labels",
                rows.nrows(),
                ids.len(),
                labels.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("bank rows must be finite".into()));
        }
        Ok(Self { ids, labels, rows })
    }

    pub fn from_anchors(anchors: &[AnchorExample]) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::NoAnchors);
        }
        let rows = rows_to_matrix(
            &anchors
                .iter()
                .map(|a| a.embedding.as_slice())
                .collect::<Vec<_>>(),
        )?;
        Self::new(
            anchors.iter().map(|a| a.id.clone()).collect(),
            anchors.iter().map(|a| a.label).collect(),
            rows,
        )
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn targets(&self) -> Array1<f64> {
        self.labels.iter().map(|l| l.target()).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|l| l.is_positive()) && self.labels.iter().any(|l| !l.is_positive())
    }

    /// Reorder rows: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let rows = Array2::from_shape_fn(self.rows.dim(), |(i, j)| self.rows[[perm[i], j]]);
        Self {
            ids: perm.iter().map(|&p| self.ids[p].clone()).collect(),
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
            rows,
        }
    }
}

/// Trained (or freshly initialized) parameters plus the shape they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct SaamModel {
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    pub threshold: f64,
}

impl SaamModel {
    pub fn variant(&self) -> Variant {
        self.layout.variant
    }

    pub fn block(&self, block: Block) -> ArrayView2<'_, f64> {
        self.layout.view(&self.params, block)
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.layout.frozen_mask()[index]
    }

    /// Training loss of `bank` scored against itself, and its gradient.
    pub fn loss_and_gradient(
        &self,
        bank: &AnchorBank,
        exclude_self: bool,
    ) -> Result<(f64, Vec<f64>)> {
        forward::loss_and_grad(&self.layout, &self.params, bank, exclude_self)
    }

    /// Untrained model with the configured initialization.
    pub fn initialize(bank: &AnchorBank, config: &SaamConfig) -> Result<Self> {
        train::init_model(bank, config)
    }
}
