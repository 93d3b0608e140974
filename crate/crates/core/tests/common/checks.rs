//! Finite-difference checks shared by the layer tests and the acceptance run.
//! Each returns the worst relative error over every parameter it covers.

use gda_core::boneage::{BoneAgeConfig, BoneAgeModel};
use gda_core::numerics::attention::AttentionWeights;
use gda_core::numerics::conv::{
    depthwise_conv, depthwise_conv_backward, global_avg_pool, global_avg_pool_backward, pointwise_conv,
    pointwise_conv_backward, ConvParams, Padding,
};
use gda_core::numerics::dense::{dense_backward, dense_forward};
use gda_core::numerics::gradcheck::numerical_gradient_check;
use gda_core::numerics::{multi_head_attention, multi_head_attention_backward, softmax_cross_entropy, AdamConfig, Tensor};
use gda_core::training::ModelParams;
use gda_core::fusion::{build_adjacency, gnn_backward, gnn_propagate, EmbeddingMatrix};

use super::rng;

const TOL: f64 = 1e-4;

fn worst(tensors: &[(&str, f64)]) -> f64 {
    tensors.iter().map(|(_, e)| *e).fold(0.0, f64::max)
}

fn check(loss: impl Fn(&Tensor) -> f64, at: &Tensor, analytic: &Tensor, tol: f64) -> f64 {
    let r = numerical_gradient_check(loss, at, analytic, tol);
    assert_eq!(analytic.shape(), at.shape());
    r.max_rel_error
}

fn conv_ce(x: &Tensor, depth: &Tensor, point: &Tensor, p: ConvParams, label: usize) -> f64 {
    let mid = depthwise_conv(x, depth, p).unwrap();
    let out = pointwise_conv(&mid, point).unwrap();
    let logits = global_avg_pool(&out).unwrap();
    softmax_cross_entropy(&logits, label).unwrap().0
}

fn conv_case(shape: [usize; 3], k: usize, classes: usize, p: ConvParams, seed: u64) -> f64 {
    let mut r = rng(seed);
    let c = shape[2];
    let x = Tensor::uniform(&shape, 1.0, &mut r);
    let depth = Tensor::uniform(&[k, k, c], 1.0, &mut r);
    let point = Tensor::uniform(&[c, classes], 1.0, &mut r);
    let label = 1;
    let mid = depthwise_conv(&x, &depth, p).unwrap();
    let out = pointwise_conv(&mid, &point).unwrap();
    let logits = global_avg_pool(&out).unwrap();
    let (_, g_logits) = softmax_cross_entropy(&logits, label).unwrap();
    let g_out = global_avg_pool_backward(out.shape(), &g_logits).unwrap();
    let (g_mid, g_point) = pointwise_conv_backward(&mid, &point, &g_out).unwrap();
    let (g_x, g_depth) = depthwise_conv_backward(&x, &depth, p, &g_mid).unwrap();
    worst(&[
        ("input", check(|t| conv_ce(t, &depth, &point, p, label), &x, &g_x, TOL)),
        ("depth", check(|t| conv_ce(&x, t, &point, p, label), &depth, &g_depth, TOL)),
        ("point", check(|t| conv_ce(&x, &depth, t, p, label), &point, &g_point, TOL)),
    ])
}

/// Separable conv → global pool → softmax cross-entropy on a 4×4×1 input,
/// plus a strided valid-padding 6×6×2 case.
pub fn separable_conv_error() -> f64 {
    let a = conv_case([4, 4, 1], 3, 3, ConvParams::default(), 11);
    let b = conv_case(
        [6, 6, 2],
        3,
        3,
        ConvParams {
            stride: 2,
            padding: Padding::Valid,
        },
        12,
    );
    a.max(b)
}

fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Two-head attention, L=3, d=4, loss `Σ y ⊙ R`.
pub fn attention_error() -> f64 {
    let mut r = rng(21);
    let x = Tensor::uniform(&[3, 4], 1.0, &mut r);
    let mut w = AttentionWeights::new(4, 2, &mut r).unwrap();
    for t in [&mut w.query, &mut w.key, &mut w.value, &mut w.output] {
        *t = Tensor::uniform(&[4, 4], 0.8, &mut r);
    }
    let target = Tensor::uniform(&[3, 4], 1.0, &mut r);
    let (y, cache) = multi_head_attention(&x, &w).unwrap();
    let g = multi_head_attention_backward(&w, &cache, &target).unwrap();
    let _ = y;
    let loss_w = |f: &dyn Fn(&mut AttentionWeights, &Tensor), t: &Tensor| {
        let mut w2 = w.clone();
        f(&mut w2, t);
        weighted_sum(&multi_head_attention(&x, &w2).unwrap().0, &target)
    };
    worst(&[
        (
            "input",
            check(|t| weighted_sum(&multi_head_attention(t, &w).unwrap().0, &target), &x, &g.input, TOL),
        ),
        ("query", check(|t| loss_w(&|w, t| w.query = t.clone(), t), &w.query, &g.query, TOL)),
        ("key", check(|t| loss_w(&|w, t| w.key = t.clone(), t), &w.key, &g.key, TOL)),
        ("value", check(|t| loss_w(&|w, t| w.value = t.clone(), t), &w.value, &g.value, TOL)),
        ("output", check(|t| loss_w(&|w, t| w.output = t.clone(), t), &w.output, &g.output, TOL)),
    ])
}

/// Dense layer 5→3 feeding softmax cross-entropy.
pub fn dense_error() -> f64 {
    let mut r = rng(31);
    let x = Tensor::uniform(&[5], 1.0, &mut r);
    let w = Tensor::uniform(&[5, 3], 1.0, &mut r);
    let b = Tensor::uniform(&[3], 1.0, &mut r);
    let loss = |x: &Tensor, w: &Tensor, b: &Tensor| {
        softmax_cross_entropy(&dense_forward(x.data(), w, b).unwrap(), 2).unwrap().0
    };
    let (_, g) = softmax_cross_entropy(&dense_forward(x.data(), &w, &b).unwrap(), 2).unwrap();
    let grads = dense_backward(x.data(), &w, &g).unwrap();
    worst(&[
        ("input", check(|t| loss(t, &w, &b), &x, &Tensor::from_vec(grads.input.clone()), TOL)),
        ("weight", check(|t| loss(&x, t, &b), &w, &grads.weight, TOL)),
        ("bias", check(|t| loss(&x, &w, t), &b, &grads.bias, TOL)),
    ])
}

/// One graph layer over a 5-node kNN graph, loss `Σ H ⊙ R`.
pub fn gnn_error() -> f64 {
    let mut r = rng(41);
    let h0 = Tensor::uniform(&[5, 4], 1.0, &mut r);
    let w = Tensor::uniform(&[4, 3], 1.0, &mut r);
    let target = Tensor::uniform(&[5, 3], 1.0, &mut r);
    let ids: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
    let emb = EmbeddingMatrix::new(h0.clone(), ids.clone()).unwrap();
    let adj = build_adjacency(&emb, 2).unwrap();
    let loss = |h: &Tensor, w: &Tensor| {
        let m = EmbeddingMatrix::new(h.clone(), ids.clone()).unwrap();
        weighted_sum(&gnn_propagate(&adj, &m, w).unwrap().rows, &target)
    };
    let (g_h0, g_w) = gnn_backward(&adj, &h0, &w, &target).unwrap();
    worst(&[
        ("h0", check(|t| loss(t, &w), &h0, &g_h0, TOL)),
        ("weight", check(|t| loss(&h0, t), &w, &g_w, TOL)),
    ])
}

/// Classification head (hidden width 6, trainable graph weight) on one
/// exemplar with an 8-dim embedding.
pub fn head_error() -> f64 {
    let mut r = rng(51);
    let ex = super::random_exemplars("h", 1, 8, 8, &mut r).remove(0);
    let mut p = ModelParams::new(8, 6, true, 3, AdamConfig::default());
    p.hidden_weight = Tensor::uniform(p.hidden_weight.shape(), 0.5, &mut r);
    p.head_weight = Tensor::uniform(p.head_weight.shape(), 0.5, &mut r);
    p.gnn_weight = Some(Tensor::uniform(&[8, 8], 0.5, &mut r));
    let (_, grads) = p.loss_and_grads(&ex).unwrap();
    let mut errs = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        let at = p.tensors()[i].clone();
        let loss = |t: &Tensor| {
            let mut q = p.clone();
            match i {
                0 => q.hidden_weight = t.clone(),
                1 => q.hidden_bias = t.clone(),
                2 => q.head_weight = t.clone(),
                3 => q.head_bias = t.clone(),
                _ => q.gnn_weight = Some(t.clone()),
            }
            q.loss_and_grads(&ex).unwrap().0
        };
        errs.push(("param", check(loss, &at, g, TOL)));
    }
    worst(&errs)
}

/// Full bone-age regressor with two blocks on an 8×8 input, loss
/// `(prediction − target)² / 2`.
pub fn boneage_error() -> f64 {
    let cfg = BoneAgeConfig {
        input_size: (8, 8),
        channels: vec![3, 4],
        ..BoneAgeConfig::default()
    };
    let mut model = BoneAgeModel::new(cfg, 5).unwrap();
    let mut r = rng(61);
    for t in model.params_mut() {
        let shape = t.shape().to_vec();
        *t = Tensor::uniform(&shape, 0.5, &mut r);
    }
    let x = Tensor::uniform(&[8, 8, 1], 1.0, &mut r);
    let target = 30.0;
    let loss_of = |m: &BoneAgeModel| {
        let p = m.forward(&x).unwrap().0;
        0.5 * (p - target) * (p - target)
    };
    let (pred, cache) = model.forward(&x).unwrap();
    let grads = model.backward(&cache, pred - target).unwrap();
    let mut errs = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        let at = model.params()[i].clone();
        let loss = |t: &Tensor| {
            let mut m = model.clone();
            *m.params_mut()[i] = t.clone();
            loss_of(&m)
        };
        errs.push(("param", check(loss, &at, g, 1e-3)));
    }
    worst(&errs)
}
