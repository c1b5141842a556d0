mod common;

use common::{noisy, random_student};
use gnn2mlp_core::cascade::student_forward;
use gnn2mlp_core::cascade::{Cascade, CascadeConfig, StudentParams};
use gnn2mlp_core::inference::{ensemble, run_anytime, FrozenClock, InferencePolicy};
use gnn2mlp_core::nn::Dense;
use gnn2mlp_core::numkit::softmax_rows;
use gnn2mlp_core::Matrix;

fn biased_student(bias0: f64) -> StudentParams<f64> {
    let mut out = Dense::zeros(2, 2);
    out.bias.set(0, 0, bias0);
    StudentParams::from_layers(vec![Dense::zeros(4, 2), out], 2).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn two_student_fixture_matches_hand_combination() {
    let c = Cascade::new(
        vec![biased_student(0.5), biased_student(3.0)],
        Vec::new(),
        0,
        CascadeConfig::default(),
    )
    .unwrap();
    let x = Matrix::from_fn(4, 2, |i, j| (i + j) as f64);
    let policy = InferencePolicy {
        conf_threshold: Some(0.9),
        ..Default::default()
    };
    let r = run_anytime(&c, &x, &policy, &[0, 1, 2, 3], &FrozenClock).unwrap();
    assert_eq!(r.executed, 2);
    let (c1, c2) = (sigmoid(0.5), sigmoid(3.0));
    assert!((r.confidences[0] - c1).abs() < 1e-15 && (r.confidences[1] - c2).abs() < 1e-15);
    let w1 = 1.0 / (1.0 + (c2 - c1).exp());
    let p0 = w1 * c1 + (1.0 - w1) * c2;
    for i in 0..4 {
        assert!((r.prediction.get(i, 0) - p0).abs() < 1e-9);
        assert!((r.prediction.get(i, 1) - (1.0 - p0)).abs() < 1e-9);
    }
}

fn brute_force(c: &Cascade<f64>, x: &Matrix<f64>, idx: &[usize]) -> (Vec<Matrix<f64>>, Vec<f64>) {
    let mut h = Matrix::zeros(x.rows(), c.hidden_dim());
    let mut preds = Vec::new();
    let mut confs = Vec::new();
    for s in &c.students {
        let (hn, logits) = student_forward(s, x, &h, false, 0.0, 0).unwrap();
        let p = softmax_rows(&logits);
        confs.push(
            idx.iter()
                .map(|&i| p.row(i).iter().cloned().fold(0.0, f64::max))
                .sum::<f64>()
                / idx.len() as f64,
        );
        preds.push(p);
        h = hn;
    }
    (preds, confs)
}

#[test]
fn anytime_equals_run_all_then_recombine() {
    let g = noisy(60, 3);
    let x = g.features().clone();
    for seed in 0..5u64 {
        let students: Vec<_> = (0..4)
            .map(|k| random_student(seed * 10 + k, x.cols(), 8, 3, 2))
            .collect();
        let c = Cascade::new(students, Vec::new(), 0, CascadeConfig::default()).unwrap();
        let idx: Vec<usize> = (0..60).step_by(2).collect();
        let (preds, confs) = brute_force(&c, &x, &idx);
        for tau in [None, Some(0.0), Some(0.4), Some(0.5), Some(0.7), Some(0.9), Some(1.0)] {
            for m in 1..=4 {
                let policy = InferencePolicy {
                    conf_threshold: tau,
                    max_students: Some(m),
                    budget_nanos: None,
                };
                let r = run_anytime(&c, &x, &policy, &idx, &FrozenClock).unwrap();
                let exit = tau
                    .and_then(|t| confs.iter().position(|&cf| cf >= t))
                    .map_or(4, |p| p + 1);
                let k = exit.min(m);
                assert_eq!(r.executed, k, "tau {tau:?} m {m}");
                let (p, _) = ensemble(&preds[..k], &confs[..k]).unwrap();
                assert!(p.max_abs_diff(&r.prediction) < 1e-9);
            }
        }
    }
}

#[test]
fn inference_leaves_cascade_untouched() {
    let g = noisy(30, 1);
    let students: Vec<_> = (0..3).map(|k| random_student(k, g.feat_dim(), 8, 3, 2)).collect();
    let c = Cascade::new(students, Vec::new(), 9, CascadeConfig::default()).unwrap();
    let before = c.fingerprint();
    let policy = InferencePolicy {
        max_students: Some(3),
        ..Default::default()
    };
    run_anytime(&c, g.features(), &policy, &g.all_nodes(), &FrozenClock).unwrap();
    assert_eq!(before, c.fingerprint());
}
