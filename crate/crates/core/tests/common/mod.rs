//! Central finite-difference oracle for the layer backward passes. Runs in
//! double precision and only ever calls forward passes, so it stays
//! independent of the analytic gradients it checks.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tilecnn::nn::{
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, softmax_xent, ArchSpec,
    BatchNorm, BlockSpec, Conv2d, Dense, Mode, Network, Tensor,
};

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|)`, with a floor on the denominator so that two
/// near-zero values compare by absolute difference.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + STEP;
            let up = f(&probe);
            probe[i] = x[i] - STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(&a, &n)| rel_error(a, n)).fold(0.0, f64::max)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tensor(shape: [usize; 4], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape, data).unwrap()
}

/// Worst relative error over conv input, weight and bias gradients for the
/// scalar `sum(out * r)` on a random 2x2x4x4 batch.
pub fn check_conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 2, 4, 4];
    let filters = 3;
    let x = uniform(&mut rng, 64, -1.0, 1.0);
    let w = uniform(&mut rng, filters * 2 * 9, -0.5, 0.5);
    let b = uniform(&mut rng, filters, -0.5, 0.5);
    let r = uniform(&mut rng, 2 * filters * 16, -1.0, 1.0);
    let loss = |x: &[f64], w: &[f64], b: &[f64]| {
        let conv = Conv2d { in_channels: 2, filters, weights: w.to_vec(), bias: b.to_vec() };
        dot(conv.forward(&tensor(shape, x.to_vec())).unwrap().data(), &r)
    };
    let conv = Conv2d { in_channels: 2, filters, weights: w.clone(), bias: b.clone() };
    let g = conv.backward(&tensor(shape, x.clone()), &tensor([2, filters, 4, 4], r.clone())).unwrap();
    [
        max_rel_error(g.input.data(), &numeric_grad(&x, |v| loss(v, &w, &b))),
        max_rel_error(&g.weights, &numeric_grad(&w, |v| loss(&x, v, &b))),
        max_rel_error(&g.bias, &numeric_grad(&b, |v| loss(&x, &w, v))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Train-mode batchnorm: input, gain and shift gradients.
pub fn check_batchnorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [3, 2, 2, 3];
    let x = uniform(&mut rng, 36, -2.0, 2.0);
    let gamma = uniform(&mut rng, 2, 0.5, 1.5);
    let beta = uniform(&mut rng, 2, -0.5, 0.5);
    let r = uniform(&mut rng, 36, -1.0, 1.0);
    let make = |g: &[f64], b: &[f64]| {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma = g.to_vec();
        bn.beta = b.to_vec();
        bn
    };
    let loss = |x: &[f64], g: &[f64], b: &[f64]| {
        let (out, _) = make(g, b).forward(&tensor(shape, x.to_vec()), Mode::Train).unwrap();
        dot(out.data(), &r)
    };
    let bn = make(&gamma, &beta);
    let (_, cache) = bn.forward(&tensor(shape, x.clone()), Mode::Train).unwrap();
    let g = bn.backward(&cache, &tensor(shape, r.clone())).unwrap();
    [
        max_rel_error(g.input.data(), &numeric_grad(&x, |v| loss(v, &gamma, &beta))),
        max_rel_error(&g.gamma, &numeric_grad(&gamma, |v| loss(&x, v, &beta))),
        max_rel_error(&g.beta, &numeric_grad(&beta, |v| loss(&x, &gamma, v))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Inputs are kept at least 0.05 away from the kink at zero.
pub fn check_relu(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 3, 3, 3];
    let x: Vec<f64> = uniform(&mut rng, 54, 0.05, 1.0)
        .into_iter()
        .map(|v| if rng.random::<bool>() { v } else { -v })
        .collect();
    let r = uniform(&mut rng, 54, -1.0, 1.0);
    let loss = |x: &[f64]| dot(relu_forward(&tensor(shape, x.to_vec())).data(), &r);
    let g = relu_backward(&tensor(shape, x.clone()), &tensor(shape, r.clone())).unwrap();
    max_rel_error(g.data(), &numeric_grad(&x, loss))
}

/// Distinct inputs spaced well beyond the step so no window has a tie.
pub fn check_maxpool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 2, 5, 4];
    let n = 80;
    let mut x: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    // Fisher-Yates with the seeded generator.
    for i in (1..n).rev() {
        x.swap(i, rng.random_range(0..=i));
    }
    let r = uniform(&mut rng, 2 * 2 * 2 * 2, -1.0, 1.0);
    let loss = |x: &[f64]| dot(maxpool2_forward(&tensor(shape, x.to_vec())).unwrap().0.data(), &r);
    let (_, cache) = maxpool2_forward(&tensor(shape, x.clone())).unwrap();
    let g = maxpool2_backward(&cache, &tensor([2, 2, 2, 2], r.clone())).unwrap();
    max_rel_error(g.data(), &numeric_grad(&x, loss))
}

pub fn check_dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, k) = (3, 7, 4);
    let x = uniform(&mut rng, n * d, -1.0, 1.0);
    let w = uniform(&mut rng, k * d, -0.5, 0.5);
    let b = uniform(&mut rng, k, -0.5, 0.5);
    let r = uniform(&mut rng, n * k, -1.0, 1.0);
    let layer = |w: &[f64], b: &[f64]| Dense { inputs: d, outputs: k, weights: w.to_vec(), bias: b.to_vec() };
    let loss = |x: &[f64], w: &[f64], b: &[f64]| {
        dot(layer(w, b).forward(&tensor([n, d, 1, 1], x.to_vec())).unwrap().data(), &r)
    };
    let g = layer(&w, &b)
        .backward(&tensor([n, d, 1, 1], x.clone()), &tensor([n, k, 1, 1], r.clone()))
        .unwrap();
    [
        max_rel_error(g.input.data(), &numeric_grad(&x, |v| loss(v, &w, &b))),
        max_rel_error(&g.weights, &numeric_grad(&w, |v| loss(&x, v, &b))),
        max_rel_error(&g.bias, &numeric_grad(&b, |v| loss(&x, &w, v))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn check_softmax_xent(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (4, 3);
    let logits = uniform(&mut rng, n * k, -3.0, 3.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let analytic = softmax_xent(&logits, k, &labels).unwrap().grad_logits;
    let numeric = numeric_grad(&logits, |z| softmax_xent(z, k, &labels).unwrap().loss);
    max_rel_error(&analytic, &numeric)
}

/// End-to-end check of the composed network in train mode: every parameter
/// of a two-block model under the mean cross-entropy loss.
pub fn check_network(seed: u64) -> f64 {
    let arch = ArchSpec {
        input_h: 6,
        input_w: 5,
        input_c: 3,
        blocks: vec![BlockSpec { filters: 4, pool: true }, BlockSpec { filters: 3, pool: false }],
        num_classes: 3,
    };
    let mut net = Network::<f64>::init(arch, seed).unwrap();
    net.set_mode(Mode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // Off-unit gain and shift so their gradients are not trivially symmetric.
    for p in net.params_mut().into_iter().skip(2).step_by(4).take(2) {
        p.iter_mut().for_each(|v| *v = 0.5 + rng.random::<f64>());
    }
    let n = 3;
    let input = tensor([n, 3, 6, 5], uniform(&mut rng, n * 90, 0.0, 1.0));
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();

    let (_, cache) = net.forward(&input).unwrap();
    let xent = softmax_xent(cache.logits.data(), 3, &labels).unwrap();
    let grads = net.backward(&cache, &xent.grad_logits).unwrap();

    let params: Vec<Vec<f64>> = net.params().iter().map(|p| p.to_vec()).collect();
    let mut worst = 0.0f64;
    for (which, values) in params.iter().enumerate() {
        let numeric = numeric_grad(values, |v| {
            let mut probe = net.clone();
            probe.params_mut()[which].copy_from_slice(v);
            let (_, c) = probe.forward(&input).unwrap();
            softmax_xent(c.logits.data(), 3, &labels).unwrap().loss
        });
        worst = worst.max(max_rel_error(&grads[which], &numeric));
    }
    worst
}

pub type LayerCheck = fn(u64) -> f64;

pub const LAYER_CHECKS: [(&str, LayerCheck); 6] = [
    ("conv", check_conv),
    ("batchnorm", check_batchnorm),
    ("relu", check_relu),
    ("maxpool", check_maxpool),
    ("dense", check_dense),
    ("softmax_xent", check_softmax_xent),
];
