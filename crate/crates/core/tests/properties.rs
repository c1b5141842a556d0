mod common;

use common::{random_matrix, random_probs, random_student};
use gnn2mlp_core::cascade::{
    mixup_examples, sample_mixup_pairs, update_ema, update_lambda, Cascade, CascadeConfig, LambdaSign, MixupConfig,
    PkdConfig,
};
use gnn2mlp_core::inference::{confidence, ensemble, run_anytime, FrozenClock, InferencePolicy};
use gnn2mlp_core::numkit::{matmul, softmax_rows, spmm};
use gnn2mlp_core::{Matrix, SparseMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lambda_always_clamped(
        lambda in 0.0f64..=0.5,
        gamma in 0.0f64..10.0,
        tau in -1.0f64..2.0,
        losses in prop::collection::vec(0.0f64..5.0, 1..30),
        inverted in any::<bool>(),
    ) {
        let sign = if inverted { LambdaSign::Inverted } else { LambdaSign::Formula };
        let mut s = MixupConfig { lambda_init: lambda, gamma, tau, sigma: 0.1, sign }.initial_state();
        for l in losses {
            s = update_lambda(update_ema(s, l));
            prop_assert!((0.0..=0.5).contains(&s.lambda));
            prop_assert!(s.ema_loss.is_finite());
        }
    }

    #[test]
    fn mixed_labels_are_distributions(seed in any::<u64>(), lambda in 0.0f64..=0.5, n in 2usize..30) {
        let y = random_probs(seed, n, 4);
        let x = random_matrix(seed, n, 3, 1.0);
        let h = random_matrix(seed + 1, n, 2, 1.0);
        let labeled: Vec<usize> = (0..n).collect();
        let pairs = sample_mixup_pairs(&labeled, seed).unwrap();
        let (mx, my) = mixup_examples(&x, &h, &y, &pairs, lambda).unwrap();
        prop_assert_eq!(mx.shape(), (n, 5));
        for i in 0..n {
            prop_assert!((my.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut second: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        second.sort_unstable();
        prop_assert_eq!(second, labeled);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..8, scale in 0.1f64..200.0) {
        let p = softmax_rows(&random_matrix(seed, rows, cols, scale));
        for i in 0..rows {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn spmm_agrees_with_dense(seed in any::<u64>(), n in 1usize..12, m in 1usize..6) {
        let dense = random_matrix(seed, n, n, 1.0).map(|v| if v.abs() < 0.6 { 0.0 } else { v });
        let s = SparseMatrix::from_dense(&dense);
        let b = random_matrix(seed + 1, n, m, 1.0);
        let got = spmm(&s, &b).unwrap();
        prop_assert!(got.max_abs_diff(&matmul(&dense, &b).unwrap()) < 1e-12);
    }

    #[test]
    fn pkd_multiplier_monotone(beta in 0.0f64..3.0) {
        let cfg = PkdConfig { alpha: 0.5, beta };
        prop_assert_eq!(cfg.multiplier(1), 1.0);
        for k in 1..12 {
            if beta == 0.0 {
                prop_assert_eq!(cfg.multiplier(k), 1.0);
            } else {
                prop_assert!(cfg.multiplier(k + 1) > cfg.multiplier(k));
            }
        }
    }

    #[test]
    fn ensemble_is_row_stochastic(seed in any::<u64>(), k in 1usize..6, rows in 1usize..8) {
        let preds: Vec<Matrix<f64>> = (0..k).map(|j| random_probs(seed + j as u64, rows, 3)).collect();
        let confs: Vec<f64> = (0..k).map(|j| 0.34 + 0.1 * j as f64).collect();
        let (p, w) = ensemble(&preds, &confs).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..rows {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn confidence_bounds(seed in any::<u64>(), rows in 1usize..10, c in 2usize..6) {
        let logits = random_matrix(seed, rows, c, 4.0);
        let idx: Vec<usize> = (0..rows).collect();
        let v = confidence(&logits, &idx).unwrap();
        prop_assert!(v > 1.0 / c as f64 && v <= 1.0);
    }

    #[test]
    fn executed_count_monotone_in_threshold(seed in 0u64..1000, taus in prop::collection::vec(0.0f64..=1.0, 2..6)) {
        let students: Vec<_> = (0..4).map(|k| random_student(seed * 7 + k, 5, 6, 3, 2)).collect();
        let c = Cascade::new(students, Vec::new(), 0, CascadeConfig::default()).unwrap();
        let x = random_matrix(seed, 12, 5, 1.0);
        let idx: Vec<usize> = (0..12).collect();
        let mut taus = taus;
        taus.sort_by(f64::total_cmp);
        let mut last = 0;
        for t in taus {
            let policy = InferencePolicy { conf_threshold: Some(t), ..Default::default() };
            let r = run_anytime(&c, &x, &policy, &idx, &FrozenClock).unwrap();
            prop_assert!(r.executed >= last);
            last = r.executed;
        }
    }
}
