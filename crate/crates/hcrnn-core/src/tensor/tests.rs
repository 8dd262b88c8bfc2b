//! Unit tests for the tensor ops: forward examples against hand-computed
//! values and backward rules against central finite differences at f64.

use super::*;
use crate::check::{finite_diff, probe_indices, rel_err};
use crate::tensor::ops::BnMode;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn matmul_identity_case() {
    let tape = Tape::<f64>::no_grad();
    let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let m = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let out = tape.matmul(&eye, &m).unwrap();
    assert_eq!(out.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_projection_case() {
    let tape = Tape::<f64>::no_grad();
    let proj = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let v = Tensor::from_vec(&[2, 1], vec![5.0, 7.0]).unwrap();
    let out = tape.matmul(&proj, &v).unwrap();
    assert_eq!(out.shape(), &[2, 1]);
    assert_eq!(out.to_vec(), vec![5.0, 0.0]);
}

#[test]
fn matmul_shape_mismatch_is_a_dimension_error() {
    let tape = Tape::<f64>::no_grad();
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[2, 3]);
    assert!(matches!(tape.matmul(&a, &b), Err(crate::Error::Dimension { .. })));
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut r = rng(1);
    let a = Tensor::<f64>::rand_uniform(&[3, 4], 1.0, &mut r).requires_grad();
    let b = Tensor::<f64>::rand_uniform(&[4, 2], 1.0, &mut r).requires_grad();

    let loss = |a: &Tensor<f64>, b: &Tensor<f64>| {
        let t = Tape::no_grad();
        t.sum(&t.matmul(a, b).unwrap()).unwrap().item()
    };

    let tape = Tape::new();
    let out = tape.sum(&tape.matmul(&a, &b).unwrap()).unwrap();
    tape.backward(&out).unwrap();

    for (name, p) in [("a", &a), ("b", &b)] {
        let grad = p.grad().unwrap();
        for idx in probe_indices(p.numel(), 8) {
            let fd = finite_diff(p, idx, 1e-5, || loss(&a, &b));
            assert!(rel_err(grad[idx], fd) < 1e-6, "{name}[{idx}]: {} vs {}", grad[idx], fd);
        }
    }
}

#[test]
fn conv2d_identity_kernel_copies_the_map() {
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::from_vec(&[1, 3, 3], (1..=9).map(|v| v as f64).collect()).unwrap();
    let k = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let b = Tensor::zeros(&[1]);
    let out = tape.conv2d(&x, &k, &b, 1, 0).unwrap();
    assert_eq!(out.shape(), &[1, 3, 3]);
    assert_eq!(out.to_vec(), x.to_vec());
}

#[test]
fn conv2d_all_ones_padded_sums_neighborhoods() {
    // 3×3 ones kernel over a padded 3×3 ones input: the center sees all
    // nine cells, each corner sees four.
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::full(&[1, 3, 3], 1.0);
    let k = Tensor::full(&[1, 1, 3, 3], 1.0);
    let b = Tensor::zeros(&[1]);
    let out = tape.conv2d(&x, &k, &b, 1, 1).unwrap();
    let v = out.to_vec();
    assert_eq!(v[4], 9.0);
    for corner in [0, 2, 6, 8] {
        assert_eq!(v[corner], 4.0);
    }
}

#[test]
fn conv2d_non_integral_output_is_a_dimension_error() {
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::<f64>::zeros(&[1, 5, 5]);
    let k = Tensor::zeros(&[1, 1, 2, 2]);
    let b = Tensor::zeros(&[1]);
    assert!(matches!(
        tape.conv2d(&x, &k, &b, 2, 0),
        Err(crate::Error::Dimension { .. })
    ));
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut r = rng(2);
    let x = Tensor::<f64>::rand_uniform(&[2, 5, 5], 1.0, &mut r).requires_grad();
    let k = Tensor::<f64>::rand_uniform(&[3, 2, 3, 3], 0.5, &mut r).requires_grad();
    let b = Tensor::<f64>::rand_uniform(&[3], 0.5, &mut r).requires_grad();

    let loss = |x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>| {
        let t = Tape::no_grad();
        t.sum(&t.conv2d(x, k, b, 1, 1).unwrap()).unwrap().item()
    };

    let tape = Tape::new();
    let out = tape.sum(&tape.conv2d(&x, &k, &b, 1, 1).unwrap()).unwrap();
    tape.backward(&out).unwrap();

    for (name, p) in [("input", &x), ("kernel", &k), ("bias", &b)] {
        let grad = p.grad().unwrap();
        for idx in probe_indices(p.numel(), 10) {
            let fd = finite_diff(p, idx, 1e-5, || loss(&x, &k, &b));
            assert!(rel_err(grad[idx], fd) < 1e-5, "{name}[{idx}]: {} vs {}", grad[idx], fd);
        }
    }
}

#[test]
fn conv2d_is_linear_in_the_input_when_bias_is_zero() {
    let mut r = rng(3);
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::rand_uniform(&[2, 6, 6], 1.0, &mut r);
    let k = Tensor::rand_uniform(&[3, 2, 3, 3], 0.5, &mut r);
    let b = Tensor::zeros(&[3]);
    let base = tape.conv2d(&x, &k, &b, 1, 1).unwrap();
    let scaled_in = tape.scale(&x, 3.5).unwrap();
    let scaled_out = tape.conv2d(&scaled_in, &k, &b, 1, 1).unwrap();
    for (a, s) in base.to_vec().iter().zip(scaled_out.to_vec()) {
        assert!(rel_err(3.5 * a, s) < 1e-6);
    }
}

#[test]
fn avg_pool_constant_and_mean_cases() {
    let tape = Tape::<f64>::no_grad();
    let ones = Tensor::from_vec(&[1, 2, 2], vec![1.0; 4]).unwrap();
    assert_eq!(tape.avg_pool2d(&ones).unwrap().to_vec(), vec![1.0]);

    let ramp = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(tape.avg_pool2d(&ramp).unwrap().to_vec(), vec![2.5]);
}

#[test]
fn avg_pool_odd_extent_is_a_dimension_error() {
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::<f64>::zeros(&[1, 3, 4]);
    assert!(matches!(tape.avg_pool2d(&x), Err(crate::Error::Dimension { .. })));
}

#[test]
fn avg_pool_chain_traces_96_48_24_12_and_keeps_channels() {
    let tape = Tape::<f64>::no_grad();
    let mut x = Tensor::full(&[64, 96, 96], 0.25);
    for expect in [48, 24, 12] {
        x = tape.avg_pool2d(&x).unwrap();
        assert_eq!(x.shape(), &[64, expect, expect]);
    }
}

#[test]
fn avg_pool_preserves_the_channel_mean() {
    let mut r = rng(4);
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::rand_uniform(&[3, 8, 8], 2.0, &mut r);
    let out = tape.avg_pool2d(&x).unwrap();
    for c in 0..3 {
        let mean_in: f64 = x.to_vec()[c * 64..(c + 1) * 64].iter().sum::<f64>() / 64.0;
        let mean_out: f64 = out.to_vec()[c * 16..(c + 1) * 16].iter().sum::<f64>() / 16.0;
        assert!((mean_in - mean_out).abs() < 1e-6);
    }
}

#[test]
fn global_avg_pool_examples_and_gradient() {
    let tape = Tape::<f64>::no_grad();
    let constant = Tensor::full(&[4, 5, 5], 3.0);
    assert_eq!(tape.global_avg_pool(&constant).unwrap().to_vec(), vec![3.0; 4]);

    let wide = Tensor::<f64>::zeros(&[256, 12, 12]);
    assert_eq!(tape.global_avg_pool(&wide).unwrap().shape(), &[256]);

    let mut r = rng(5);
    let x = Tensor::<f64>::rand_uniform(&[2, 4, 4], 1.0, &mut r).requires_grad();
    let loss = |x: &Tensor<f64>| {
        let t = Tape::no_grad();
        t.sum(&t.global_avg_pool(x).unwrap()).unwrap().item()
    };
    let tape = Tape::new();
    let out = tape.sum(&tape.global_avg_pool(&x).unwrap()).unwrap();
    tape.backward(&out).unwrap();
    let grad = x.grad().unwrap();
    // Backward spreads g/(H·W) uniformly.
    assert!(grad.iter().all(|&g| (g - 1.0 / 16.0).abs() < 1e-12));
    for idx in probe_indices(x.numel(), 6) {
        let fd = finite_diff(&x, idx, 1e-5, || loss(&x));
        assert!(rel_err(grad[idx], fd) < 1e-6);
    }
}

#[test]
fn fully_connected_zero_weights_return_bias() {
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
    let w = Tensor::zeros(&[2, 3]);
    let b = Tensor::from_vec(&[2], vec![4.0, -1.5]).unwrap();
    assert_eq!(tape.fully_connected(&x, &w, &b).unwrap().to_vec(), vec![4.0, -1.5]);
}

#[test]
fn fully_connected_accepts_paper_widths() {
    let tape = Tape::<f64>::no_grad();
    let x256 = Tensor::<f64>::zeros(&[256]);
    let w256 = Tensor::zeros(&[256, 256]);
    let b256 = Tensor::zeros(&[256]);
    assert_eq!(tape.fully_connected(&x256, &w256, &b256).unwrap().shape(), &[256]);

    let x1536 = Tensor::<f64>::zeros(&[1536]);
    let w = Tensor::zeros(&[1024, 1536]);
    let b = Tensor::zeros(&[1024]);
    assert_eq!(tape.fully_connected(&x1536, &w, &b).unwrap().shape(), &[1024]);
}

#[test]
fn fully_connected_gradients_match_finite_differences() {
    let mut r = rng(6);
    let x = Tensor::<f64>::rand_uniform(&[4, 3], 1.0, &mut r).requires_grad();
    let w = Tensor::<f64>::rand_uniform(&[2, 3], 1.0, &mut r).requires_grad();
    let b = Tensor::<f64>::rand_uniform(&[2], 1.0, &mut r).requires_grad();
    let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        let t = Tape::no_grad();
        t.sum(&t.fully_connected(x, w, b).unwrap()).unwrap().item()
    };
    let tape = Tape::new();
    let out = tape.sum(&tape.fully_connected(&x, &w, &b).unwrap()).unwrap();
    tape.backward(&out).unwrap();
    for (name, p) in [("x", &x), ("w", &w), ("b", &b)] {
        let grad = p.grad().unwrap();
        for idx in probe_indices(p.numel(), 6) {
            let fd = finite_diff(p, idx, 1e-5, || loss(&x, &w, &b));
            assert!(rel_err(grad[idx], fd) < 1e-6, "{name}[{idx}]");
        }
    }
}

#[test]
fn activation_values() {
    let tape = Tape::<f64>::no_grad();
    let x = Tensor::from_vec(&[4], vec![-1.0, 2.0, 0.0, 0.0]).unwrap();
    assert_eq!(tape.relu(&x).unwrap().to_vec(), vec![0.0, 2.0, 0.0, 0.0]);
    let zero = Tensor::from_vec(&[1], vec![0.0]).unwrap();
    assert_eq!(tape.sigmoid(&zero).unwrap().to_vec(), vec![0.5]);
    assert_eq!(tape.tanh(&zero).unwrap().to_vec(), vec![0.0]);
}

#[test]
fn concat_builds_the_ensemble_width() {
    let tape = Tape::<f64>::no_grad();
    let palm = Tensor::<f64>::zeros(&[256]);
    let fingers: Vec<Tensor<f64>> = (0..5).map(|_| Tensor::zeros(&[256])).collect();
    let mut parts: Vec<&Tensor<f64>> = vec![&palm];
    parts.extend(fingers.iter());
    let cat = tape.concat(&parts, 0).unwrap();
    assert_eq!(cat.shape(), &[1536]);
}

#[test]
fn concat_rejects_mismatched_extents() {
    let tape = Tape::<f64>::no_grad();
    let a = Tensor::<f64>::zeros(&[2, 3]);
    let b = Tensor::<f64>::zeros(&[3, 3]);
    assert!(tape.concat(&[&a, &b], 1).is_err());
}

#[test]
fn elementwise_gradient_rules() {
    let mut r = rng(7);
    let x = Tensor::<f64>::rand_uniform(&[5], 1.0, &mut r).requires_grad();

    // backward(sum(x)) → all-ones gradient.
    let tape = Tape::new();
    let s = tape.sum(&x).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 5]);

    // backward(sum(x ⊙ x)) → 2x.
    x.zero_grad();
    let tape = Tape::new();
    let s = tape.sum(&tape.mul(&x, &x).unwrap()).unwrap();
    tape.backward(&s).unwrap();
    for (g, v) in x.grad().unwrap().iter().zip(x.to_vec()) {
        assert!((g - 2.0 * v).abs() < 1e-12);
    }
}

#[test]
fn backward_usage_errors() {
    let x = Tensor::from_vec(&[2], vec![1.0f64, 2.0]).unwrap().requires_grad();
    let tape = Tape::new();
    let y = tape.mul(&x, &x).unwrap();
    // Non-scalar seed.
    assert!(matches!(tape.backward(&y), Err(crate::Error::Usage(_))));
    // Detached seed: a tensor never produced on this tape.
    let s = Tensor::scalar(1.0f64);
    assert!(matches!(tape.backward(&s), Err(crate::Error::Usage(_))));
}

#[test]
fn backward_consumes_the_tape() {
    let x = Tensor::from_vec(&[2], vec![1.0f64, 2.0]).unwrap().requires_grad();
    let tape = Tape::new();
    let s = tape.sum(&x).unwrap();
    tape.backward(&s).unwrap();
    assert!(tape.is_empty());
    // Second backward on the consumed tape is a usage error.
    assert!(matches!(tape.backward(&s), Err(crate::Error::Usage(_))));
}

#[test]
fn gradient_additivity_of_two_scalar_seeds() {
    let mut r = rng(8);
    let x = Tensor::<f64>::rand_uniform(&[4], 1.0, &mut r).requires_grad();

    // Joint backward on s1 + s2.
    let tape = Tape::new();
    let s1 = tape.sum(&tape.mul(&x, &x).unwrap()).unwrap();
    let s2 = tape.sum(&x).unwrap();
    let joint = tape.add(&s1, &s2).unwrap();
    tape.backward(&joint).unwrap();
    let joint_grad = x.grad().unwrap();

    // Separate backwards, summed.
    x.zero_grad();
    let t1 = Tape::new();
    let a = t1.sum(&t1.mul(&x, &x).unwrap()).unwrap();
    t1.backward(&a).unwrap();
    let g1 = x.grad().unwrap();
    x.zero_grad();
    let t2 = Tape::new();
    let b = t2.sum(&x).unwrap();
    t2.backward(&b).unwrap();
    let g2 = x.grad().unwrap();

    for ((j, a), b) in joint_grad.iter().zip(g1).zip(g2) {
        assert!((j - (a + b)).abs() < 1e-12);
    }
}

#[test]
fn forward_is_deterministic() {
    let mut r = rng(9);
    let x = Tensor::<f64>::rand_uniform(&[2, 8, 8], 1.0, &mut r);
    let k = Tensor::<f64>::rand_uniform(&[4, 2, 3, 3], 0.5, &mut r);
    let b = Tensor::<f64>::rand_uniform(&[4], 0.5, &mut r);
    let tape = Tape::no_grad();
    let first = tape.conv2d(&x, &k, &b, 1, 1).unwrap().to_vec();
    let second = tape.conv2d(&x, &k, &b, 1, 1).unwrap().to_vec();
    assert_eq!(first, second);
}

#[test]
fn non_finite_forward_is_a_numeric_error() {
    let tape = Tape::<f64>::no_grad();
    let huge = Tensor::full(&[2], f64::MAX);
    match tape.mul(&huge, &huge) {
        Err(crate::Error::NonFinite { op, .. }) => assert_eq!(op, "mul"),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn batch_norm_identity_on_standardized_input() {
    // Zero-mean unit-variance input with γ=1, β=0 passes through within ε.
    let mut data = Vec::new();
    for i in 0..32 {
        data.push(if i % 2 == 0 { 1.0 } else { -1.0 });
    }
    let x = Tensor::<f64>::from_vec(&[4, 2, 2, 2], data).unwrap();
    let gamma = Tensor::full(&[2], 1.0);
    let beta = Tensor::zeros(&[2]);
    let rm = Tensor::zeros(&[2]);
    let rv = Tensor::full(&[2], 1.0);
    let tape = Tape::no_grad();
    let out = tape
        .batch_norm(&x, &gamma, &beta, &rm, &rv, 1e-5, 0.9, BnMode::Train)
        .unwrap();
    for (o, i) in out.to_vec().iter().zip(x.to_vec()) {
        assert!((o - i).abs() < 1e-3);
    }
}

#[test]
fn batch_norm_constant_input_returns_beta() {
    let x = Tensor::<f64>::full(&[4, 3, 2, 2], 7.7);
    let gamma = Tensor::full(&[3], 1.0);
    let beta = Tensor::full(&[3], 5.0);
    let rm = Tensor::zeros(&[3]);
    let rv = Tensor::full(&[3], 1.0);
    let tape = Tape::no_grad();
    let out = tape
        .batch_norm(&x, &gamma, &beta, &rm, &rv, 1e-5, 0.9, BnMode::Train)
        .unwrap();
    assert!(out.to_vec().iter().all(|&v| (v - 5.0).abs() < 1e-9));
}

#[test]
fn batch_norm_batch_of_one_in_train_mode_is_a_config_error() {
    let x = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
    let gamma = Tensor::full(&[2], 1.0);
    let beta = Tensor::zeros(&[2]);
    let rm = Tensor::zeros(&[2]);
    let rv = Tensor::full(&[2], 1.0);
    let tape = Tape::no_grad();
    assert!(matches!(
        tape.batch_norm(&x, &gamma, &beta, &rm, &rv, 1e-5, 0.9, BnMode::Train),
        Err(crate::Error::Config(_))
    ));
    // Infer mode accepts batch 1.
    assert!(tape
        .batch_norm(&x, &gamma, &beta, &rm, &rv, 1e-5, 0.9, BnMode::Infer)
        .is_ok());
}

#[test]
fn batch_norm_updates_running_moments() {
    let x = Tensor::<f64>::full(&[2, 1, 1, 2], 4.0);
    let gamma = Tensor::full(&[1], 1.0);
    let beta = Tensor::zeros(&[1]);
    let rm = Tensor::zeros(&[1]);
    let rv = Tensor::full(&[1], 1.0);
    let tape = Tape::no_grad();
    tape.batch_norm(&x, &gamma, &beta, &rm, &rv, 1e-5, 0.9, BnMode::Train).unwrap();
    // running ← 0.9·running + 0.1·batch: mean 0.4, var 0.9 (batch var 0).
    assert!((rm.to_vec()[0] - 0.4).abs() < 1e-12);
    assert!((rv.to_vec()[0] - 0.9).abs() < 1e-12);
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let mut r = rng(10);
    let x = Tensor::<f64>::rand_uniform(&[4, 2, 3, 3], 1.0, &mut r).requires_grad();
    let gamma = Tensor::<f64>::rand_uniform(&[2], 0.5, &mut r).requires_grad();
    let beta = Tensor::<f64>::rand_uniform(&[2], 0.5, &mut r).requires_grad();

    let loss = |x: &Tensor<f64>, gamma: &Tensor<f64>, beta: &Tensor<f64>| {
        let rm = Tensor::zeros(&[2]);
        let rv = Tensor::full(&[2], 1.0);
        let t = Tape::no_grad();
        let y = t.batch_norm(x, gamma, beta, &rm, &rv, 1e-5, 0.9, BnMode::Train).unwrap();
        // A non-uniform weighting so ∂loss/∂x is not annihilated by the
        // mean-subtraction in the BN backward.
        let weights = Tensor::from_vec(
            &[4, 2, 3, 3],
            (0..72).map(|i| ((i * 13 % 7) as f64) - 3.0).collect(),
        )
        .unwrap();
        t.sum(&t.mul(&y, &weights).unwrap()).unwrap().item()
    };

    let rm = Tensor::zeros(&[2]);
    let rv = Tensor::full(&[2], 1.0);
    let tape = Tape::new();
    let y = tape.batch_norm(&x, &gamma, &beta, &rm, &rv, 1e-5, 0.9, BnMode::Train).unwrap();
    let weights = Tensor::from_vec(
        &[4, 2, 3, 3],
        (0..72).map(|i| ((i * 13 % 7) as f64) - 3.0).collect(),
    )
    .unwrap();
    let out = tape.sum(&tape.mul(&y, &weights).unwrap()).unwrap();
    tape.backward(&out).unwrap();

    for (name, p) in [("x", &x), ("gamma", &gamma), ("beta", &beta)] {
        let grad = p.grad().unwrap();
        for idx in probe_indices(p.numel(), 8) {
            let fd = finite_diff(p, idx, 1e-5, || loss(&x, &gamma, &beta));
            assert!(
                rel_err(grad[idx], fd) < 1e-4,
                "{name}[{idx}]: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }
}

#[test]
fn smooth_l1_sum_gradient_matches_finite_differences() {
    let mut r = rng(11);
    let pred = Tensor::<f64>::rand_uniform(&[6], 0.05, &mut r).requires_grad();
    let target = Tensor::<f64>::rand_uniform(&[6], 0.05, &mut r);

    let loss = |pred: &Tensor<f64>, target: &Tensor<f64>| {
        let t = Tape::no_grad();
        t.smooth_l1_sum(pred, target).unwrap().item()
    };
    let tape = Tape::new();
    let out = tape.smooth_l1_sum(&pred, &target).unwrap();
    tape.backward(&out).unwrap();
    let grad = pred.grad().unwrap();
    for idx in 0..pred.numel() {
        let fd = finite_diff(&pred, idx, 1e-7, || loss(&pred, &target));
        assert!(rel_err(grad[idx], fd) < 1e-3, "[{idx}]: {} vs {fd}", grad[idx]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sigmoid_and_tanh_stay_in_range(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = Tensor::<f64>::rand_uniform(&[16], 20.0, &mut r);
        let tape = Tape::no_grad();
        for v in tape.sigmoid(&x).unwrap().to_vec() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for v in tape.tanh(&x).unwrap().to_vec() {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn concat_then_split_round_trips(n0 in 1usize..5, n1 in 1usize..5, seed in 0u64..1000) {
        let mut r = rng(seed);
        let a = Tensor::<f64>::rand_uniform(&[2, n0], 1.0, &mut r);
        let b = Tensor::<f64>::rand_uniform(&[2, n1], 1.0, &mut r);
        let tape = Tape::no_grad();
        let cat = tape.concat(&[&a, &b], 1).unwrap();
        prop_assert_eq!(cat.shape(), &[2, n0 + n1]);
        let cv = cat.to_vec();
        let (av, bv) = (a.to_vec(), b.to_vec());
        for row in 0..2 {
            for i in 0..n0 {
                prop_assert_eq!(cv[row * (n0 + n1) + i], av[row * n0 + i]);
            }
            for i in 0..n1 {
                prop_assert_eq!(cv[row * (n0 + n1) + n0 + i], bv[row * n1 + i]);
            }
        }
    }
}
