mod support;

use acm::numeric::tensor::{cross_entropy, gelu, matmul, softmax};
use acm::numeric::{RngState, Tensor};
use support::oracle;

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = RngState::new(19);
    for _ in 0..20 {
        let a = support::random_tensor(&[3, 4], &mut rng);
        let b = support::random_tensor(&[4, 2], &mut rng);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.data(), support::naive_matmul(&a, &b).as_slice());
    }
}

#[test]
fn softmax_extended_precision() {
    let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = softmax(&x, 0).unwrap();
    for (got, want) in y.data().iter().zip(oracle::SOFTMAX_123) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
    let shifted = Tensor::new(vec![3], vec![101.0, 102.0, 103.0]).unwrap();
    for (a, b) in softmax(&shifted, 0).unwrap().data().iter().zip(y.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_extended_precision() {
    let got = cross_entropy(&[1.0, 2.0, 3.0], 1).unwrap();
    assert!((got - oracle::CE_123_TARGET_1).abs() < 1e-14, "{got}");
    assert!(cross_entropy(&[1.0, 2.0, 3.0], 3).is_err());
}

#[test]
fn gelu_tanh_form() {
    assert!((gelu(2.0) - oracle::GELU_TANH_2).abs() < 1e-14, "{}", gelu(2.0));
}

#[test]
fn every_op_passes_gradient_check() {
    for seed in [3, 4] {
        for (name, err) in support::check_all_ops(seed) {
            assert!(err < 1e-4, "{name}: relative error {err}");
        }
    }
}

#[test]
fn attention_and_fused_loss_gradients() {
    let attn = support::check_conditioned_attention(5);
    assert!(attn < 1e-4, "conditioned attention {attn}");
    let fused = support::check_fused_loss(5);
    assert!(fused < 1e-4, "fused loss {fused}");
}
