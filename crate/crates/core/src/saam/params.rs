use std::ops::Range;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{SaamConfig, Variant};

/// Named parameter blocks. Vectors are stored as `1 x n` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    WQ,
    WK,
    WV,
    HeadW,
    HeadB,
    H1,
    B1,
    H2,
    B2,
}

/// Offsets of every block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub variant: Variant,
    pub d: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub heads: usize,
    pub hidden: usize,
    pub n_anchors: usize,
    blocks: Vec<(Block, usize, usize, usize)>,
}

impl ParamLayout {
    pub fn new(
        variant: Variant,
        d: usize,
        d_k: usize,
        heads: usize,
        hidden: usize,
        n_anchors: usize,
    ) -> Self {
        let (d_k, d_v) = match variant {
            Variant::Qkv => (d_k, d_k),
            Variant::KOnly => (d, d),
            Variant::Cossim => (0, 0),
        };
        let shapes: Vec<(Block, usize, usize)> = match variant {
            Variant::Qkv | Variant::KOnly => vec![
                (Block::WQ, d, d_k),
                (Block::WK, d, d_k),
                (Block::WV, d, d_v),
                (Block::HeadW, 1, d_v),
                (Block::HeadB, 1, 1),
            ],
            Variant::Cossim => vec![
                (Block::H1, n_anchors, hidden),
                (Block::B1, 1, hidden),
                (Block::H2, 1, hidden),
                (Block::B2, 1, 1),
            ],
        };
        let mut offset = 0;
        let blocks = shapes
            .into_iter()
            .map(|(b, r, c)| {
                let start = offset;
                offset += r * c;
                (b, start, r, c)
            })
            .collect();
        Self {
            variant,
            d,
            d_k,
            d_v,
            heads: if variant.is_attention() { heads } else { 1 },
            hidden: if variant.is_attention() { 0 } else { hidden },
            n_anchors,
            blocks,
        }
    }

    pub fn from_config(config: &SaamConfig, d: usize, n_anchors: usize) -> Self {
        Self::new(
            config.variant,
            d,
            config.d_k,
            config.heads,
            config.hidden,
            n_anchors,
        )
    }

    pub fn len(&self) -> usize {
        self.blocks
            .last()
            .map(|&(_, s, r, c)| s + r * c)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Block, (usize, usize))> + '_ {
        self.blocks.iter().map(|&(b, _, r, c)| (b, (r, c)))
    }

    fn entry(&self, block: Block) -> (usize, usize, usize) {
        let &(_, s, r, c) = self
            .blocks
            .iter()
            .find(|e| e.0 == block)
            .unwrap_or_else(|| panic!("{block:?} is not part of a {} model", self.variant));
        (s, r, c)
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        let (s, r, c) = self.entry(block);
        s..s + r * c
    }

    pub fn shape(&self, block: Block) -> (usize, usize) {
        let (_, r, c) = self.entry(block);
        (r, c)
    }

    pub fn view<'a>(&self, params: &'a [f64], block: Block) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape(self.shape(block), &params[self.range(block)]).expect("layout shape")
    }

    pub fn view_mut<'a>(&self, params: &'a mut [f64], block: Block) -> ArrayViewMut2<'a, f64> {
        let shape = self.shape(block);
        ArrayViewMut2::from_shape(shape, &mut params[self.range(block)]).expect("layout shape")
    }

    /// `k_only` never trains its query and value maps.
    pub fn frozen_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        if self.variant == Variant::KOnly {
            for b in [Block::WQ, Block::WV] {
                mask[self.range(b)].iter_mut().for_each(|m| *m = true);
            }
        }
        mask
    }

    /// Initial parameters: projections Gaussian with std 1/sqrt(d) and zero
    /// head for `qkv`; identity query/value and identity-plus-noise key for
    /// `k_only`; Gaussian first layer (std 1/sqrt(n)) and zero output layer
    /// for `cossim`.
    pub fn init(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.len()];
        match self.variant {
            Variant::Qkv => {
                let normal = Normal::new(0.0, 1.0 / (self.d as f64).sqrt()).expect("std > 0");
                for b in [Block::WQ, Block::WK, Block::WV] {
                    self.view_mut(&mut params, b)
                        .iter_mut()
                        .for_each(|w| *w = normal.sample(rng));
                }
            }
            Variant::KOnly => {
                let normal = Normal::new(0.0, 1e-3).expect("std > 0");
                for b in [Block::WQ, Block::WK, Block::WV] {
                    self.view_mut(&mut params, b).assign(&Array2::eye(self.d));
                }
                self.view_mut(&mut params, Block::WK)
                    .iter_mut()
                    .for_each(|w| *w += normal.sample(rng));
            }
            Variant::Cossim => {
                let normal =
                    Normal::new(0.0, 1.0 / (self.n_anchors.max(1) as f64).sqrt()).expect("std > 0");
                self.view_mut(&mut params, Block::H1)
                    .iter_mut()
                    .for_each(|w| *w = normal.sample(rng));
            }
        }
        params
    }
}
