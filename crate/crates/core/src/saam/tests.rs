use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};

use super::*;
use crate::synth::random_bank;
use crate::BinaryLabel::{Negative, Positive};

fn bank(rows: Array2<f64>, labels: Vec<BinaryLabel>) -> AnchorBank {
    let ids = (0..rows.nrows()).map(|i| format!("a{i}")).collect();
    AnchorBank::new(ids, labels, rows).unwrap()
}

/// Two antipodal clusters, positives around +e0 and negatives around -e0.
fn antipodal_bank() -> AnchorBank {
    let rows = array![
        [1.0, 0.1, 0.0],
        [0.9, -0.1, 0.1],
        [1.1, 0.0, -0.1],
        [-1.0, 0.1, 0.0],
        [-0.9, 0.0, 0.1],
        [-1.1, -0.1, 0.0],
    ];
    bank(
        rows,
        vec![Positive, Positive, Positive, Negative, Negative, Negative],
    )
}

fn k_only_model(bank: &AnchorBank) -> SaamModel {
    SaamModel::initialize(bank, &SaamConfig::with_variant(Variant::KOnly)).unwrap()
}

#[test]
fn single_anchor_gets_all_weight() {
    let b = bank(array![[0.3, -0.4]], vec![Positive]);
    let out = attention_forward(&[1.0, 2.0], &b, &k_only_model(&b)).unwrap();
    assert_eq!(out.weights, vec![vec![1.0]]);
    assert_eq!(out.context, vec![0.3, -0.4]);
}

#[test]
fn identical_keys_split_evenly() {
    let b = bank(array![[1.0, 0.0], [1.0, 0.0]], vec![Positive, Negative]);
    let mut m = k_only_model(&b);
    m.layout
        .view_mut(&mut m.params, Block::WK)
        .assign(&Array2::eye(2));
    let out = attention_forward(&[0.7, 0.2], &b, &m).unwrap();
    assert_abs_diff_eq!(out.weights[0][0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(out.weights[0][1], 0.5, epsilon = 1e-12);
}

#[test]
fn scalar_softmax_example() {
    let b = bank(array![[1.0], [0.0]], vec![Positive, Negative]);
    let mut m = k_only_model(&b);
    m.layout.view_mut(&mut m.params, Block::WK).fill(1.0);
    let out = attention_forward(&[1.0], &b, &m).unwrap();
    assert_eq!(out.logits[0], vec![1.0, 0.0]);
    assert_abs_diff_eq!(out.weights[0][0], 0.73106, epsilon = 1e-5);
    assert_abs_diff_eq!(out.weights[0][1], 0.26894, epsilon = 1e-5);
    // zero head: probability is sigmoid(0)
    assert_eq!(out.probability, 0.5);
}

#[test]
fn forward_rejects_bad_inputs() {
    let b = bank(array![[1.0, 0.0]], vec![Positive]);
    let m = k_only_model(&b);
    assert!(matches!(
        attention_forward(&[1.0], &b, &m),
        Err(Error::DimMismatch {
            expected: 2,
            actual: 1
        })
    ));
    let pair = antipodal_bank();
    let cos = SaamModel::initialize(&pair, &SaamConfig::with_variant(Variant::Cossim)).unwrap();
    assert!(matches!(
        attention_forward(&[1.0, 0.0, 0.0], &pair, &cos),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        AnchorBank::new(vec![], vec![], Array2::zeros((0, 2))),
        Err(Error::NoAnchors)
    ));
}

#[test]
fn cossim_feature_examples() {
    let b = bank(array![[1.0, 0.0], [1.0, 1.0]], vec![Positive, Negative]);
    let f = cossim_features(&[1.0, 0.0], &b).unwrap();
    assert_abs_diff_eq!(f[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(f[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

    let b = bank(
        array![[0.0, 2.0, 0.0], [0.0, 0.0, -1.0]],
        vec![Positive, Negative],
    );
    assert_eq!(
        cossim_features(&[3.0, 0.0, 0.0], &b).unwrap(),
        vec![0.0, 0.0]
    );
    assert!(matches!(
        cossim_features(&[0.0, 0.0, 0.0], &b),
        Err(Error::ZeroVector)
    ));
    let z = bank(array![[0.0, 0.0, 0.0]], vec![Positive]);
    assert!(matches!(
        cossim_features(&[1.0, 0.0, 0.0], &z),
        Err(Error::ZeroVector)
    ));
}

#[test]
fn k_only_training_keeps_query_and_value_identity() {
    let b = antipodal_bank();
    let mut cfg = SaamConfig::with_variant(Variant::KOnly);
    cfg.lr = 0.05;
    cfg.patience = 0;
    let t = train(&b, &cfg).unwrap();
    assert_eq!(t.loss_trace.len(), 31);
    let eye = Array2::<f64>::eye(3);
    for blk in [Block::WQ, Block::WV] {
        let w = t.model.block(blk);
        assert!(w
            .iter()
            .zip(eye.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    assert_ne!(
        t.model.block(Block::WK),
        SaamModel::initialize(&b, &cfg).unwrap().block(Block::WK)
    );
}

#[test]
fn training_reduces_loss_on_separable_bank() {
    let b = antipodal_bank();
    for v in Variant::ALL {
        let mut cfg = SaamConfig::with_variant(v);
        cfg.d_k = 4;
        cfg.hidden = 4;
        cfg.lr = 0.05;
        let t = train(&b, &cfg).unwrap();
        assert!(
            t.final_loss() < t.initial_loss(),
            "{v}: {} -> {}",
            t.initial_loss(),
            t.final_loss()
        );
        let probs = predict(&t.model, &b, b.view()).unwrap();
        for (p, l) in probs.iter().zip(&b.labels) {
            assert_eq!(*p > 0.5, l.is_positive(), "{v}");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let b = random_bank(8, 5, 11);
    for v in Variant::ALL {
        let mut cfg = SaamConfig::with_variant(v);
        cfg.seed = 7;
        cfg.d_k = 4;
        cfg.heads = if v == Variant::Qkv { 2 } else { 1 };
        let a = train(&b, &cfg).unwrap();
        let c = train(&b, &cfg).unwrap();
        let bits = |t: &TrainedModel| {
            t.model
                .params
                .iter()
                .map(|p| p.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&c));
        assert_eq!(a.loss_trace, c.loss_trace);
    }
}

#[test]
fn single_class_bank_is_rejected() {
    let b = bank(array![[1.0, 0.0], [0.0, 1.0]], vec![Positive, Positive]);
    for v in Variant::ALL {
        assert!(matches!(
            train(&b, &SaamConfig::with_variant(v)),
            Err(Error::DegenerateLabels)
        ));
    }
}

#[test]
fn config_validation() {
    let b = antipodal_bank();
    let mut cfg = SaamConfig::with_variant(Variant::Qkv);
    cfg.d_k = 5;
    cfg.heads = 2;
    assert!(matches!(train(&b, &cfg), Err(Error::Config(_))));
    cfg.heads = 1;
    cfg.threshold = 1.0;
    assert!(matches!(train(&b, &cfg), Err(Error::Config(_))));
}

#[test]
fn early_stop_shortens_trace() {
    let b = antipodal_bank();
    let mut cfg = SaamConfig::with_variant(Variant::KOnly);
    cfg.epochs = 200;
    cfg.min_delta = 1.0;
    let t = train(&b, &cfg).unwrap();
    assert_eq!(t.loss_trace.len(), cfg.patience + 1);
}

#[test]
fn predict_edge_cases() {
    let b = antipodal_bank();
    let mut cfg = SaamConfig::with_variant(Variant::Qkv);
    cfg.d_k = 2;
    let t = train(&b, &cfg).unwrap();
    assert!(predict(&t.model, &b, Array2::zeros((0, 3)).view())
        .unwrap()
        .is_empty());
    let x = array![[0.5, 0.5, 0.1], [0.5, 0.5, 0.1], [-2.0, 0.0, 1.0]];
    let p = predict(&t.model, &b, x.view()).unwrap();
    assert_eq!(p[0].to_bits(), p[1].to_bits());
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(matches!(
        predict(&t.model, &b, Array2::zeros((1, 2)).view()),
        Err(Error::DimMismatch { .. })
    ));
}

#[test]
fn saturated_logits_stay_inside_unit_interval() {
    let b = antipodal_bank();
    let mut m = k_only_model(&b);
    m.layout.view_mut(&mut m.params, Block::HeadB).fill(1e3);
    let p = predict(&m, &b, b.view()).unwrap();
    assert!(p.iter().all(|&v| v < 1.0));
    m.layout.view_mut(&mut m.params, Block::HeadB).fill(-1e3);
    let p = predict(&m, &b, b.view()).unwrap();
    assert!(p.iter().all(|&v| v > 0.0));
}

#[test]
fn gradients_match_finite_differences() {
    let b = random_bank(6, 8, 3);
    for v in Variant::ALL {
        for (heads, exclude_self) in [(1, false), (2, false), (1, true)] {
            let mut cfg = SaamConfig::with_variant(v);
            cfg.seed = 3;
            cfg.d_k = 4;
            cfg.heads = if v == Variant::KOnly { 1 } else { heads };
            cfg.hidden = 5;
            cfg.exclude_self = exclude_self;
            let r = finite_diff_gradcheck(&b, &cfg, 1e-5).unwrap();
            assert!(
                r.max_rel_error < 1e-4,
                "{v} heads={heads} exclude_self={exclude_self}: {} at {:?}",
                r.max_rel_error,
                r.worst_index()
            );
        }
    }
}

#[test]
fn k_only_reports_zero_gradient_for_frozen_maps() {
    let b = random_bank(5, 4, 1);
    let r = finite_diff_gradcheck(&b, &SaamConfig::with_variant(Variant::KOnly), 1e-5).unwrap();
    let m = k_only_model(&b);
    for blk in [Block::WQ, Block::WV] {
        for i in m.layout.range(blk) {
            assert!(r.frozen[i]);
            assert_eq!(r.analytic[i], 0.0);
            assert_eq!(r.numeric[i], 0.0);
        }
    }
    assert!(r.frozen.iter().filter(|&&f| f).count() == 32);
}

#[test]
fn head_bias_gradient_closed_form() {
    // symmetric bank: +-e0, +-e1
    let b = bank(
        array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
        vec![Positive, Negative, Positive, Positive],
    );
    let mut cfg = SaamConfig::with_variant(Variant::Qkv);
    cfg.d_k = 2;
    let mut m = SaamModel::initialize(&b, &cfg).unwrap();
    assert!(m.block(Block::HeadW).iter().all(|&w| w == 0.0));
    let bias = 0.3;
    m.layout.view_mut(&mut m.params, Block::HeadB).fill(bias);
    let (_, g) = m.loss_and_gradient(&b, false).unwrap();
    let expected = crate::linalg::sigmoid(bias) - 0.75;
    let gi = m.layout.range(Block::HeadB).start;
    assert_abs_diff_eq!(g[gi], expected, epsilon = 1e-15);
    let r = gradcheck_at(&m, &b, false, 1e-5).unwrap();
    assert_abs_diff_eq!(r.numeric[gi], expected, epsilon = 1e-9);
}

#[test]
fn padded_keys_scale_logits_by_inverse_sqrt_two() {
    let b = random_bank(4, 3, 5);
    let x = [0.2, -0.7, 1.1];
    let mut cfg = SaamConfig::with_variant(Variant::Qkv);
    cfg.d_k = 1;
    let narrow = SaamModel::initialize(&b, &cfg).unwrap();
    cfg.d_k = 2;
    let mut wide = SaamModel::initialize(&b, &cfg).unwrap();
    for blk in [Block::WQ, Block::WK, Block::WV] {
        let src = narrow.block(blk).to_owned();
        let mut dst = wide.layout.view_mut(&mut wide.params, blk);
        dst.fill(0.0);
        dst.column_mut(0).assign(&src.column(0));
    }
    let a = attention_forward(&x, &b, &narrow).unwrap();
    let c = attention_forward(&x, &b, &wide).unwrap();
    for (l1, l2) in a.logits[0].iter().zip(&c.logits[0]) {
        assert_abs_diff_eq!(*l2, l1 / 2f64.sqrt(), epsilon = 1e-14);
    }
}
