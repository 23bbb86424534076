use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{Block, ParamLayout};
use super::{AnchorBank, SaamModel, Variant};
use crate::linalg::{bce_with_logit, row_norms, sigmoid, softmax_rows};
use crate::{Error, Result};

/// Intermediate values of a batched attention pass.
pub(crate) struct AttnCache {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Pre-softmax scores per head, `m x n`.
    pub logits: Vec<Array2<f64>>,
    /// Attention weights per head, `m x n`.
    pub attn: Vec<Array2<f64>>,
    pub ctx: Array2<f64>,
    pub z: Array1<f64>,
}

pub(crate) fn attention_batch(
    layout: &ParamLayout,
    params: &[f64],
    x: ArrayView2<f64>,
    bank: ArrayView2<f64>,
    mask_self: bool,
) -> AttnCache {
    let frozen_qv = layout.variant == Variant::KOnly;
    let q = if frozen_qv {
        x.to_owned()
    } else {
        x.dot(&layout.view(params, Block::WQ))
    };
    let k = bank.dot(&layout.view(params, Block::WK));
    let v = if frozen_qv {
        bank.to_owned()
    } else {
        bank.dot(&layout.view(params, Block::WV))
    };
    let (m, n) = (x.nrows(), bank.nrows());
    let dh = layout.d_k / layout.heads;
    let dvh = layout.d_v / layout.heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut ctx = Array2::zeros((m, layout.d_v));
    let mut logits = Vec::with_capacity(layout.heads);
    let mut attn = Vec::with_capacity(layout.heads);
    for h in 0..layout.heads {
        let qh = q.slice(s![.., h * dh..(h + 1) * dh]);
        let kh = k.slice(s![.., h * dh..(h + 1) * dh]);
        let vh = v.slice(s![.., h * dvh..(h + 1) * dvh]);
        let mut scores = qh.dot(&kh.t()) * scale;
        let mut weights = scores.clone();
        if mask_self {
            for i in 0..m.min(n) {
                weights[[i, i]] = f64::NEG_INFINITY;
                scores[[i, i]] = f64::NEG_INFINITY;
            }
        }
        softmax_rows(&mut weights);
        ctx.slice_mut(s![.., h * dvh..(h + 1) * dvh])
            .assign(&weights.dot(&vh));
        logits.push(scores);
        attn.push(weights);
    }
    let head_w = layout.view(params, Block::HeadW);
    let head_b = params[layout.range(Block::HeadB)][0];
    let z = ctx.dot(&head_w.row(0)) + head_b;
    AttnCache {
        q,
        k,
        v,
        logits,
        attn,
        ctx,
        z,
    }
}

/// Parameter gradient given `dz = dL/dz` per input row.
pub(crate) fn attention_backward(
    layout: &ParamLayout,
    params: &[f64],
    x: ArrayView2<f64>,
    bank: ArrayView2<f64>,
    cache: &AttnCache,
    dz: &Array1<f64>,
) -> Vec<f64> {
    let mut grad = vec![0.0; layout.len()];
    let head_w = layout.view(params, Block::HeadW).row(0).to_owned();
    layout
        .view_mut(&mut grad, Block::HeadW)
        .row_mut(0)
        .assign(&cache.ctx.t().dot(dz));
    grad[layout.range(Block::HeadB)][0] = dz.sum();

    let dh = layout.d_k / layout.heads;
    let dvh = layout.d_v / layout.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    // dctx = dz ⊗ head_w
    let dctx = dz
        .view()
        .insert_axis(Axis(1))
        .dot(&head_w.view().insert_axis(Axis(0)));
    let mut dq = Array2::<f64>::zeros(cache.q.dim());
    let mut dk = Array2::<f64>::zeros(cache.k.dim());
    let mut dv = Array2::<f64>::zeros(cache.v.dim());
    for h in 0..layout.heads {
        let a = &cache.attn[h];
        let qh = cache.q.slice(s![.., h * dh..(h + 1) * dh]);
        let kh = cache.k.slice(s![.., h * dh..(h + 1) * dh]);
        let vh = cache.v.slice(s![.., h * dvh..(h + 1) * dvh]);
        let dctx_h = dctx.slice(s![.., h * dvh..(h + 1) * dvh]);
        let da = dctx_h.dot(&vh.t());
        dv.slice_mut(s![.., h * dvh..(h + 1) * dvh])
            .scaled_add(1.0, &a.t().dot(&dctx_h));
        // softmax backward: ds = a * (da - sum_j a_j da_j)
        let inner = (a * &da).sum_axis(Axis(1));
        let mut ds = a * &(da - &inner.insert_axis(Axis(1)));
        ds *= scale;
        dq.slice_mut(s![.., h * dh..(h + 1) * dh])
            .scaled_add(1.0, &ds.dot(&kh));
        dk.slice_mut(s![.., h * dh..(h + 1) * dh])
            .scaled_add(1.0, &ds.t().dot(&qh));
    }
    layout
        .view_mut(&mut grad, Block::WK)
        .assign(&bank.t().dot(&dk));
    if layout.variant != Variant::KOnly {
        layout
            .view_mut(&mut grad, Block::WQ)
            .assign(&x.t().dot(&dq));
        layout
            .view_mut(&mut grad, Block::WV)
            .assign(&bank.t().dot(&dv));
    }
    grad
}

pub(crate) struct CosCache {
    pub features: Array2<f64>,
    pub hidden: Array2<f64>,
    pub z: Array1<f64>,
}

fn cosine_matrix(
    x: ArrayView2<f64>,
    bank: ArrayView2<f64>,
    mask_self: bool,
) -> Result<Array2<f64>> {
    let xn = row_norms(x);
    let bn = row_norms(bank);
    if xn.iter().chain(&bn).any(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut f = x.dot(&bank.t());
    for ((i, j), v) in f.indexed_iter_mut() {
        *v = (*v / (xn[i] * bn[j])).clamp(-1.0, 1.0);
    }
    if mask_self {
        for i in 0..f.nrows().min(f.ncols()) {
            f[[i, i]] = 0.0;
        }
    }
    Ok(f)
}

pub(crate) fn cossim_batch(
    layout: &ParamLayout,
    params: &[f64],
    x: ArrayView2<f64>,
    bank: ArrayView2<f64>,
    mask_self: bool,
) -> Result<CosCache> {
    let features = cosine_matrix(x, bank, mask_self)?;
    let b1 = layout.view(params, Block::B1);
    let hidden = (features.dot(&layout.view(params, Block::H1)) + b1.row(0)).mapv(f64::tanh);
    let b2 = params[layout.range(Block::B2)][0];
    let z = hidden.dot(&layout.view(params, Block::H2).row(0)) + b2;
    Ok(CosCache {
        features,
        hidden,
        z,
    })
}

pub(crate) fn cossim_backward(
    layout: &ParamLayout,
    params: &[f64],
    cache: &CosCache,
    dz: &Array1<f64>,
) -> Vec<f64> {
    let mut grad = vec![0.0; layout.len()];
    let h2 = layout.view(params, Block::H2).row(0).to_owned();
    layout
        .view_mut(&mut grad, Block::H2)
        .row_mut(0)
        .assign(&cache.hidden.t().dot(dz));
    grad[layout.range(Block::B2)][0] = dz.sum();
    let dhidden = dz
        .view()
        .insert_axis(Axis(1))
        .dot(&h2.view().insert_axis(Axis(0)))
        * &cache.hidden.mapv(|h| 1.0 - h * h);
    layout
        .view_mut(&mut grad, Block::H1)
        .assign(&cache.features.t().dot(&dhidden));
    layout
        .view_mut(&mut grad, Block::B1)
        .row_mut(0)
        .assign(&dhidden.sum_axis(Axis(0)));
    grad
}

pub(crate) fn check_dims(
    layout: &ParamLayout,
    x: ArrayView2<f64>,
    bank: &AnchorBank,
) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::NoAnchors);
    }
    if bank.dim() != layout.d {
        return Err(Error::DimMismatch {
            expected: layout.d,
            actual: bank.dim(),
        });
    }
    if x.ncols() != layout.d {
        return Err(Error::DimMismatch {
            expected: layout.d,
            actual: x.ncols(),
        });
    }
    if layout.variant == Variant::Cossim && bank.len() != layout.n_anchors {
        return Err(Error::DimMismatch {
            expected: layout.n_anchors,
            actual: bank.len(),
        });
    }
    Ok(())
}

/// Logits for every row of `x` scored against `bank`.
pub(crate) fn logits(
    layout: &ParamLayout,
    params: &[f64],
    x: ArrayView2<f64>,
    bank: &AnchorBank,
    mask_self: bool,
) -> Result<Array1<f64>> {
    check_dims(layout, x, bank)?;
    Ok(if layout.variant.is_attention() {
        attention_batch(layout, params, x, bank.view(), mask_self).z
    } else {
        cossim_batch(layout, params, x, bank.view(), mask_self)?.z
    })
}

/// Mean binary cross-entropy of every anchor scored against the full bank,
/// and its gradient. Frozen entries get a zero gradient.
pub(crate) fn loss_and_grad(
    layout: &ParamLayout,
    params: &[f64],
    bank: &AnchorBank,
    exclude_self: bool,
) -> Result<(f64, Vec<f64>)> {
    let x = bank.view();
    check_dims(layout, x, bank)?;
    if exclude_self && bank.len() < 2 {
        return Err(Error::Precondition(
            "excluding self needs at least two anchors".into(),
        ));
    }
    let y = bank.targets();
    let n = bank.len() as f64;
    let loss_of = |z: &Array1<f64>| {
        z.iter()
            .zip(&y)
            .map(|(&z, &y)| bce_with_logit(z, y))
            .sum::<f64>()
            / n
    };
    let dz_of = |z: &Array1<f64>| -> Array1<f64> {
        z.iter()
            .zip(&y)
            .map(|(&z, &y)| (sigmoid(z) - y) / n)
            .collect()
    };
    if layout.variant.is_attention() {
        let cache = attention_batch(layout, params, x, x, exclude_self);
        let dz = dz_of(&cache.z);
        Ok((
            loss_of(&cache.z),
            attention_backward(layout, params, x, x, &cache, &dz),
        ))
    } else {
        let cache = cossim_batch(layout, params, x, x, exclude_self)?;
        let dz = dz_of(&cache.z);
        Ok((
            loss_of(&cache.z),
            cossim_backward(layout, params, &cache, &dz),
        ))
    }
}

/// Sigmoid kept strictly inside (0, 1) so saturated logits still yield a
/// usable probability.
pub(crate) fn probability(z: f64) -> f64 {
    sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Training loss only.
pub(crate) fn loss(
    layout: &ParamLayout,
    params: &[f64],
    bank: &AnchorBank,
    exclude_self: bool,
) -> Result<f64> {
    let z = logits(layout, params, bank.view(), bank, exclude_self)?;
    let y = bank.targets();
    Ok(z.iter()
        .zip(&y)
        .map(|(&z, &y)| bce_with_logit(z, y))
        .sum::<f64>()
        / bank.len() as f64)
}

/// Single-input attention pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Pre-softmax scores per head.
    pub logits: Vec<Vec<f64>>,
    /// Softmax weights over the anchors, one vector per head.
    pub weights: Vec<Vec<f64>>,
    pub context: Vec<f64>,
    pub probability: f64,
}

pub fn attention_forward(
    x: &[f64],
    bank: &AnchorBank,
    model: &SaamModel,
) -> Result<AttentionOutput> {
    let layout = &model.layout;
    if !layout.variant.is_attention() {
        return Err(Error::Config(
            "attention_forward needs the qkv or k_only variant".into(),
        ));
    }
    let xm = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
    check_dims(layout, xm, bank)?;
    let cache = attention_batch(layout, &model.params, xm, bank.view(), false);
    Ok(AttentionOutput {
        logits: cache.logits.iter().map(|l| l.row(0).to_vec()).collect(),
        weights: cache.attn.iter().map(|a| a.row(0).to_vec()).collect(),
        context: cache.ctx.row(0).to_vec(),
        probability: probability(cache.z[0]),
    })
}

/// Cosine similarity of `x` to every anchor.
pub fn cossim_features(x: &[f64], bank: &AnchorBank) -> Result<Vec<f64>> {
    if bank.is_empty() {
        return Err(Error::NoAnchors);
    }
    if x.len() != bank.dim() {
        return Err(Error::DimMismatch {
            expected: bank.dim(),
            actual: x.len(),
        });
    }
    let xm = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
    Ok(cosine_matrix(xm, bank.view(), false)?.row(0).to_vec())
}
