//! Representation adaptation with contrastive anchor pairs.
//!
//! For every keyword, `per_class` anchors are drawn from each label. All
//! within-label pairs of the draws are positive pairs and the full cross
//! product of the two label draws gives the negative pairs, so a usable
//! keyword contributes `2 * C(per_class, 2)` positives and `per_class^2`
//! negatives. A linear map (optionally followed by tanh) over the frozen
//! embeddings is then fit to pull positive pairs together and push negative
//! pairs below a cosine margin.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embed::io::{format_row, header_usize, header_value};
use crate::linalg::{cosine_similarity, rows_to_matrix};
use crate::optim::{Adam, AdamConfig};
use crate::rng::rng_from_seed;
use crate::{BinaryLabel, Error, Result};

pub const DEFAULT_PER_CLASS: usize = 10;
pub const DEFAULT_MARGIN: f64 = 0.2;

/// A labeled, embedded training example tagged with the filter keyword that
/// surfaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorExample {
    pub id: String,
    pub embedding: Vec<f64>,
    pub label: BinaryLabel,
    pub keyword: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairRelation {
    Positive,
    Negative,
}

/// Pairs of indices into the anchor slice passed to [`sample_and_pair`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ContrastivePairSet {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
    /// `(positives, negatives)` contributed by each keyword.
    pub per_keyword_counts: BTreeMap<String, (usize, usize)>,
    /// Keywords lacking an anchor of one of the labels.
    pub skipped_keywords: Vec<String>,
}

impl ContrastivePairSet {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, PairRelation)> + '_ {
        self.positives
            .iter()
            .map(|&(a, b)| (a, b, PairRelation::Positive))
            .chain(
                self.negatives
                    .iter()
                    .map(|&(a, b)| (a, b, PairRelation::Negative)),
            )
    }
}

/// Draw `per_class` members of `pool`: without replacement when the pool is
/// large enough, uniformly with replacement otherwise.
fn draw(pool: &[usize], per_class: usize, rng: &mut impl Rng) -> Vec<usize> {
    if pool.len() >= per_class {
        index::sample(rng, pool.len(), per_class)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    } else {
        (0..per_class)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect()
    }
}

fn within_pairs(draws: &[usize], out: &mut Vec<(usize, usize)>) {
    for i in 0..draws.len() {
        for j in i + 1..draws.len() {
            out.push((draws[i], draws[j]));
        }
    }
}

/// Build the contrastive pair set. Keywords are visited in lexicographic
/// order so the result depends only on the anchors and the seed.
pub fn sample_and_pair(
    anchors: &[AnchorExample],
    per_class: usize,
    seed: u64,
) -> Result<ContrastivePairSet> {
    if anchors.is_empty() {
        return Err(Error::Precondition("no anchors to pair".into()));
    }
    if per_class == 0 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    let mut groups: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, a) in anchors.iter().enumerate() {
        let g = groups.entry(a.keyword.as_str()).or_default();
        match a.label {
            BinaryLabel::Positive => g.0.push(i),
            BinaryLabel::Negative => g.1.push(i),
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut set = ContrastivePairSet::default();
    for (keyword, (pos, neg)) in groups {
        if pos.is_empty() || neg.is_empty() {
            log::warn!("keyword {keyword:?} lacks anchors of both labels; skipped");
            set.skipped_keywords.push(keyword.to_string());
            continue;
        }
        let pos_draw = draw(&pos, per_class, &mut rng);
        let neg_draw = draw(&neg, per_class, &mut rng);
        let (p0, n0) = (set.positives.len(), set.negatives.len());
        within_pairs(&pos_draw, &mut set.positives);
        within_pairs(&neg_draw, &mut set.positives);
        for &p in &pos_draw {
            for &n in &neg_draw {
                set.negatives.push((p, n));
            }
        }
        set.per_keyword_counts.insert(
            keyword.to_string(),
            (set.positives.len() - p0, set.negatives.len() - n0),
        );
    }
    if set.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(set)
}

/// Contrastive loss on cosine similarity: `1 - cos` for positive pairs,
/// `max(0, cos - margin)` for negative pairs.
pub fn contrastive_pair_loss(
    u: &[f64],
    v: &[f64],
    relation: PairRelation,
    margin: f64,
) -> Result<f64> {
    let c = cosine_similarity(u, v)?;
    Ok(match relation {
        PairRelation::Positive => 1.0 - c,
        PairRelation::Negative => (c - margin).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
}

/// `y = act(x W + b)` with `W: d_in x d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterMap {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl AdapterMap {
    pub fn identity(dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::eye(dim),
            bias: Array1::zeros(dim),
            activation,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim_out(&self) -> usize {
        self.weights.ncols()
    }

    fn activate(&self, mut pre: Array2<f64>) -> Array2<f64> {
        if self.activation == Activation::Tanh {
            pre.mapv_inplace(f64::tanh);
        }
        pre
    }

    /// Map every row of `x`.
    pub fn apply_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim_in() {
            return Err(Error::DimMismatch {
                expected: self.dim_in(),
                actual: x.ncols(),
            });
        }
        Ok(self.activate(x.dot(&self.weights) + &self.bias))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = rows_to_matrix(&[x])?;
        Ok(self.apply_matrix(m.view())?.row(0).to_vec())
    }

    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let m = rows_to_matrix(rows)?;
        Ok(self
            .apply_matrix(m.view())?
            .axis_iter(Axis(0))
            .map(|r| r.to_vec())
            .collect())
    }

    /// Persist as an `adapter` header followed by a vector block holding the
    /// weight rows (`w<i>`) and the bias.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let activation = match self.activation {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
        };
        writeln!(
            w,
            "adapter dim_in={} dim_out={} activation={activation}",
            self.dim_in(),
            self.dim_out()
        )?;
        writeln!(w, "dim={} count={}", self.dim_out(), self.dim_in() + 1)?;
        for (i, row) in self.weights.axis_iter(Axis(0)).enumerate() {
            writeln!(w, "w{i}\t{}", format_row(&row.to_vec()))?;
        }
        writeln!(w, "bias\t{}", format_row(&self.bias.to_vec()))?;
        Ok(())
    }

    pub fn read_from_lines<I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let header = lines
            .next()
            .ok_or_else(|| Error::CorruptFile("missing adapter header".into()))??;
        if !header.starts_with("adapter ") {
            return Err(Error::CorruptFile(format!(
                "expected adapter header, got {header:?}"
            )));
        }
        let dim_in = header_usize(&header, "dim_in")?;
        let dim_out = header_usize(&header, "dim_out")?;
        let activation = match header_value(&header, "activation").unwrap_or("linear") {
            "linear" => Activation::Linear,
            "tanh" => Activation::Tanh,
            other => return Err(Error::CorruptFile(format!("unknown activation {other:?}"))),
        };
        let block = crate::embed::io::read_embedding_block(lines)?;
        if block.len() != dim_in + 1 || block.iter().any(|v| v.values.len() != dim_out) {
            return Err(Error::CorruptFile(format!(
                "adapter {dim_in}x{dim_out} needs {} rows of width {dim_out}",
                dim_in + 1
            )));
        }
        let weights = rows_to_matrix(
            &block[..dim_in]
                .iter()
                .map(|v| v.values.clone())
                .collect::<Vec<_>>(),
        )?;
        let weights = if dim_in == 0 {
            Array2::zeros((0, dim_out))
        } else {
            weights
        };
        Ok(Self {
            weights,
            bias: Array1::from(block[dim_in].values.clone()),
            activation,
        })
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        Self::read_from_lines(&mut reader.lines())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub margin: f64,
    pub per_class: usize,
    pub activation: Activation,
    /// Standard deviation of the noise added to the identity at start.
    pub init_noise: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 30,
            seed: 0,
            margin: DEFAULT_MARGIN,
            per_class: DEFAULT_PER_CLASS,
            activation: Activation::Linear,
            init_noise: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdapterTraining {
    pub map: AdapterMap,
    /// Mean pair loss before each update, plus the loss of the returned map.
    pub loss_trace: Vec<f64>,
}

/// Mean pair loss of the mapped anchors and its gradient w.r.t. the mapped
/// rows.
fn pair_loss_and_grad(
    mapped: &Array2<f64>,
    pairs: &ContrastivePairSet,
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    let mut grad = Array2::zeros(mapped.dim());
    let norms: Vec<f64> = mapped
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for (a, b, rel) in pairs.iter() {
        let (ua, ub) = (mapped.row(a), mapped.row(b));
        let (na, nb) = (norms[a], norms[b]);
        if na == 0.0 || nb == 0.0 {
            return Err(Error::ZeroVector);
        }
        let c = (ua.dot(&ub) / (na * nb)).clamp(-1.0, 1.0);
        let (loss, dl_dc) = match rel {
            PairRelation::Positive => (1.0 - c, -1.0),
            PairRelation::Negative if c > margin => (c - margin, 1.0),
            PairRelation::Negative => (0.0, 0.0),
        };
        total += loss;
        if dl_dc != 0.0 {
            let g = dl_dc * scale;
            // d cos / d ua = ub / (|ua||ub|) - cos * ua / |ua|^2
            let ga = &ub * (g / (na * nb)) - &ua * (g * c / (na * na));
            let gb = &ua * (g / (na * nb)) - &ub * (g * c / (nb * nb));
            grad.row_mut(a).scaled_add(1.0, &ga);
            grad.row_mut(b).scaled_add(1.0, &gb);
        }
    }
    Ok((total * scale, grad))
}

/// Mean contrastive loss of `pairs` under `map`.
pub fn mean_pair_loss(
    map: &AdapterMap,
    anchors: &Array2<f64>,
    pairs: &ContrastivePairSet,
    margin: f64,
) -> Result<f64> {
    let mapped = map.apply_matrix(anchors.view())?;
    Ok(pair_loss_and_grad(&mapped, pairs, margin)?.0)
}

/// Fit an adapter with full-batch Adam. With `epochs == 0` the exact identity
/// map is returned.
pub fn train_adapter(
    pairs: &ContrastivePairSet,
    anchors: &[AnchorExample],
    config: &AdapterConfig,
) -> Result<AdapterTraining> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let embeddings: Vec<&[f64]> = anchors.iter().map(|a| a.embedding.as_slice()).collect();
    let x = rows_to_matrix(&embeddings)?;
    let d = x.ncols();
    if d == 0 {
        return Err(Error::Precondition("anchors have no dimensions".into()));
    }
    if let Some(&(a, b)) = pairs
        .positives
        .iter()
        .chain(&pairs.negatives)
        .find(|&&(a, b)| a >= anchors.len() || b >= anchors.len())
    {
        return Err(Error::Precondition(format!(
            "pair ({a}, {b}) indexes past the anchors"
        )));
    }

    let mut map = AdapterMap::identity(d, config.activation);
    if config.epochs == 0 {
        let loss = mean_pair_loss(&map, &x, pairs, config.margin)?;
        return Ok(AdapterTraining {
            map,
            loss_trace: vec![loss],
        });
    }
    if config.init_noise > 0.0 {
        let mut rng = rng_from_seed(config.seed);
        let normal = Normal::new(0.0, config.init_noise)
            .map_err(|e| Error::Config(format!("init noise: {e}")))?;
        map.weights.mapv_inplace(|w| w + normal.sample(&mut rng));
    }

    let n_w = d * d;
    let mut params: Vec<f64> = map
        .weights
        .iter()
        .copied()
        .chain(map.bias.iter().copied())
        .collect();
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        params.len(),
    );
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let pre = x.dot(&map.weights) + &map.bias;
        let mapped = map.activate(pre);
        let (loss, grad_out) = pair_loss_and_grad(&mapped, pairs, config.margin)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(loss);
        if epoch == config.epochs {
            break;
        }
        let grad_pre = match config.activation {
            Activation::Linear => grad_out,
            Activation::Tanh => grad_out * &mapped.mapv(|y| 1.0 - y * y),
        };
        let grad_w = x.t().dot(&grad_pre);
        let grad_b = grad_pre.sum_axis(Axis(0));
        let grads: Vec<f64> = grad_w
            .iter()
            .copied()
            .chain(grad_b.iter().copied())
            .collect();
        adam.step(&mut params, &grads, None);
        map.weights = Array2::from_shape_vec((d, d), params[..n_w].to_vec()).expect("shape");
        map.bias = Array1::from(params[n_w..].to_vec());
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(AdapterTraining {
        map,
        loss_trace: trace,
    })
}

/// Mean cosine over positive pairs and over negative pairs.
pub fn mean_pair_cosines(rows: &[Vec<f64>], pairs: &ContrastivePairSet) -> Result<(f64, f64)> {
    let mean = |ps: &[(usize, usize)]| -> Result<f64> {
        let mut s = 0.0;
        for &(a, b) in ps {
            s += cosine_similarity(&rows[a], &rows[b])?;
        }
        Ok(s / ps.len().max(1) as f64)
    };
    Ok((mean(&pairs.positives)?, mean(&pairs.negatives)?))
}
