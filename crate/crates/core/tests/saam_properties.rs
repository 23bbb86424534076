use ndarray::Array2;
use proptest::prelude::*;

use saam::saam::{
    attention_forward, cossim_features, predict, train, AnchorBank, SaamConfig, SaamModel, Variant,
};
use saam::BinaryLabel;

fn bank_strategy(max_n: usize, d: usize) -> impl Strategy<Value = AnchorBank> {
    (2..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(vals, pos)| {
                let mut rows = Array2::from_shape_vec((n, d), vals).unwrap();
                // keep rows away from zero so cosine features exist
                rows.column_mut(0).mapv_inplace(|v| v + 3.0);
                let mut labels: Vec<BinaryLabel> = pos
                    .iter()
                    .map(|&p| {
                        if p {
                            BinaryLabel::Positive
                        } else {
                            BinaryLabel::Negative
                        }
                    })
                    .collect();
                labels[0] = BinaryLabel::Positive;
                labels[1] = BinaryLabel::Negative;
                AnchorBank::new((0..n).map(|i| format!("a{i}")).collect(), labels, rows).unwrap()
            })
    })
}

fn qkv_config(seed: u64) -> SaamConfig {
    SaamConfig {
        d_k: 4,
        heads: 2,
        seed,
        epochs: 5,
        lr: 0.01,
        ..SaamConfig::with_variant(Variant::Qkv)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_weights_form_a_simplex(b in bank_strategy(7, 3), x in prop::collection::vec(-3.0f64..3.0, 3), seed in 0u64..50) {
        for cfg in [qkv_config(seed), SaamConfig { seed, ..SaamConfig::with_variant(Variant::KOnly) }] {
            let m = SaamModel::initialize(&b, &cfg).unwrap();
            let out = attention_forward(&x, &b, &m).unwrap();
            prop_assert_eq!(out.weights.len(), cfg.heads);
            for w in &out.weights {
                prop_assert!(w.iter().all(|&v| v >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
            prop_assert!(out.probability > 0.0 && out.probability < 1.0);
        }
    }

    #[test]
    fn k_only_context_is_convex_combination_of_anchors(b in bank_strategy(7, 3), x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let m = SaamModel::initialize(&b, &SaamConfig::with_variant(Variant::KOnly)).unwrap();
        let out = attention_forward(&x, &b, &m).unwrap();
        let w = &out.weights[0];
        for j in 0..3 {
            let rebuilt: f64 = (0..b.len()).map(|i| w[i] * b.rows[[i, j]]).sum();
            prop_assert!((rebuilt - out.context[j]).abs() <= 1e-12);
            let col = b.rows.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.context[j] >= lo - 1e-12 && out.context[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn permuting_the_bank_permutes_weights(b in bank_strategy(6, 3), x in prop::collection::vec(-3.0f64..3.0, 3), rot in 0usize..6) {
        let n = b.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let pb = b.permuted(&perm);
        let cfg = qkv_config(4);
        // same parameters, bank order swapped
        let m = train(&b, &cfg).unwrap();
        let mp = train(&pb, &cfg).unwrap();
        let o = attention_forward(&x, &b, &m.model).unwrap();
        let op = attention_forward(&x, &pb, &m.model).unwrap();
        for h in 0..cfg.heads {
            for (i, &p) in perm.iter().enumerate() {
                prop_assert!((op.weights[h][i] - o.weights[h][p]).abs() <= 1e-12);
            }
        }
        for (a, c) in o.context.iter().zip(&op.context) {
            prop_assert!((a - c).abs() <= 1e-9);
        }
        prop_assert!((o.probability - op.probability).abs() <= 1e-9);
        for (a, c) in m.loss_trace.iter().zip(&mp.loss_trace) {
            prop_assert!((a - c).abs() <= 1e-9);
        }
    }

    #[test]
    fn cossim_ignores_input_scale(b in bank_strategy(6, 3), x in prop::collection::vec(0.1f64..3.0, 3), scale in 0.01f64..100.0) {
        let cfg = SaamConfig { hidden: 4, epochs: 3, lr: 0.05, ..SaamConfig::with_variant(Variant::Cossim) };
        let t = train(&b, &cfg).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let fa = cossim_features(&x, &b).unwrap();
        let fb = cossim_features(&scaled, &b).unwrap();
        for (a, c) in fa.iter().zip(&fb) {
            prop_assert!((a - c).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(a));
        }
        let xs = Array2::from_shape_vec((2, 3), x.iter().chain(&scaled).copied().collect()).unwrap();
        let p = predict(&t.model, &b, xs.view()).unwrap();
        prop_assert!((p[0] - p[1]).abs() <= 1e-12);
    }
}
