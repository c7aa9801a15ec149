//! Finite-difference checks of every layer kind over random shapes, plus the
//! full heads and the fusion model.

mod common;

use rand::Rng;
use ssf::cli::{gradcheck_objective, ModelArg};
use ssf::nn::gradcheck::relative_error;
use ssf::nn::{grad_check, ConvSpec, GradCheckConfig, LayerSpec};
use ssf::FeatureSubset;

fn check(specs: &[LayerSpec], input_shape: &[usize], seed: u64) {
    let r = common::check_layers(specs, input_shape, seed);
    assert!(r.passed(), "{specs:?} on {input_shape:?}: {r:?}");
}

#[test]
fn conv2d_random_shapes() {
    let mut rng = common::rng(1);
    for case in 0..20 {
        let spec = ConvSpec {
            in_channels: rng.gen_range(1..=3),
            out_channels: rng.gen_range(1..=4),
            kernel: rng.gen_range(1..=3),
            stride: rng.gen_range(1..=2),
            padding: rng.gen_range(0..=1),
        };
        let h = rng.gen_range(spec.kernel..=6);
        let w = rng.gen_range(spec.kernel..=6);
        let n = rng.gen_range(1..=2);
        check(&[LayerSpec::Conv2d(spec)], &[n, spec.in_channels, h, w], 100 + case);
    }
}

#[test]
fn conv1d_random_shapes() {
    let mut rng = common::rng(2);
    for case in 0..20 {
        let spec = ConvSpec {
            in_channels: rng.gen_range(1..=3),
            out_channels: rng.gen_range(1..=4),
            kernel: rng.gen_range(1..=3),
            stride: rng.gen_range(1..=2),
            padding: rng.gen_range(0..=1),
        };
        let len = rng.gen_range(spec.kernel..=9);
        check(&[LayerSpec::Conv1d(spec)], &[rng.gen_range(1..=2), spec.in_channels, len], 200 + case);
    }
}

#[test]
fn fully_connected_random_shapes() {
    let mut rng = common::rng(3);
    for case in 0..20 {
        let (i, o) = (rng.gen_range(1..=12), rng.gen_range(1..=8));
        check(&[LayerSpec::fc(i, o)], &[rng.gen_range(1..=3), i], 300 + case);
    }
}

#[test]
fn relu_and_flatten_random_shapes() {
    let mut rng = common::rng(4);
    for case in 0..20 {
        let (c, h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let n = rng.gen_range(1..=2);
        check(
            &[LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::fc(c * h * w, 3), LayerSpec::Relu],
            &[n, c, h, w],
            400 + case,
        );
    }
}

#[test]
fn full_heads_and_fusion_pass() {
    for model in [ModelArg::SsfCnn, ModelArg::SsfNn, ModelArg::PcConv1d, ModelArg::Fusion] {
        let mut obj = gradcheck_objective(model, 4, FeatureSubset::FULL, 3, 2, 7).unwrap();
        let cfg = GradCheckConfig {
            max_entries_per_block: Some(40),
            ..Default::default()
        };
        let r = grad_check(&mut obj, &cfg).unwrap();
        assert!(r.passed(), "{model:?}: {r:?}");
        assert!(r.blocks.iter().all(|b| b.checked > 0));
    }
}

#[test]
fn corrupted_gradient_fails() {
    let obj = gradcheck_objective(ModelArg::SsfNn, 3, FeatureSubset::FULL, 3, 2, 1).unwrap();
    let mut bad = common::Doubled(obj);
    let cfg = GradCheckConfig {
        max_entries_per_block: Some(20),
        ..Default::default()
    };
    let r = grad_check(&mut bad, &cfg).unwrap();
    assert!(!r.passed());
    // a doubled gradient g against the true g gives |2g − g| / (3|g|) = 1/3
    assert!((r.max_rel_error() - 1.0 / 3.0).abs() < 1e-3, "{}", r.max_rel_error());
    assert!(relative_error(2.0, 1.0) > GradCheckConfig::default().tolerance);
}
