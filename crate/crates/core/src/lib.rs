//! Low-resource prosocial chat classification.
//!
//! The crate covers the whole batch pipeline: cleaning raw chat logs into
//! player-match histories, embedding them, discovering keyword-bearing topics,
//! adapting embeddings with contrastive anchor pairs, and training the
//! self-anchored attention model (plus its baselines) under a seeded
//! anchor/test split protocol.

pub mod adapt;
pub mod baselines;
pub mod embed;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod rng;
pub mod saam;
pub mod synth;
pub mod text;
pub mod topics;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Binary class used for training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    pub fn is_positive(self) -> bool {
        matches!(self, BinaryLabel::Positive)
    }

    /// 1.0 for positive, 0.0 for negative.
    pub fn target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            BinaryLabel::Negative => BinaryLabel::Positive,
            BinaryLabel::Positive => BinaryLabel::Negative,
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinaryLabel::Negative => f.write_str("negative"),
            BinaryLabel::Positive => f.write_str("positive"),
        }
    }
}

impl FromStr for BinaryLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" | "1" => Ok(BinaryLabel::Positive),
            "negative" | "0" => Ok(BinaryLabel::Negative),
            other => Err(Error::BadLabel(other.to_string())),
        }
    }
}
