//! Central finite-difference checks of layer gradients in `f64`.
//!
//! Every check draws a random layer, input and loss weighting `r` from a seed
//! and compares analytic gradients of `L = sum(r * layer(x))` against
//! `(L(x + h) - L(x - h)) / 2h` for every input and parameter element.

#![allow(dead_code)]

use ascnet::models::{Network, NetworkSpec};
use ascnet::nn::{
    cross_entropy, softmax_cross_entropy, AvgPool2d, BatchNorm2d, Conv2d, Dense, Dropout, GlobalPool, Layer, LayerKind,
    Mode, Relu, Softmax, Tensor,
};
use ascnet::Head;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const DENOM_FLOOR: f64 = 1e-7;
pub const MAX_REL_ERR: f64 = 1e-4;
pub const SEEDS: u64 = 20;
pub const ZERO_GRAD: f64 = 1e-8;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

fn uniform(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values with `|v| >= 0.1`, keeping ReLU inputs away from the kink.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

fn weighted_sum(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Layer, input and a re-seeding hook run before every forward pass.
struct Case {
    layer: Layer<f64>,
    x: Tensor<f64>,
    dropout_seed: Option<u64>,
}

fn forward(case: &mut Case, x: &Tensor<f64>) -> Tensor<f64> {
    if let (Layer::Dropout(d), Some(s)) = (&mut case.layer, case.dropout_seed) {
        d.reseed(s);
    }
    case.layer.forward(x, Mode::Train).unwrap()
}

fn check_case(mut case: Case, rng: &mut ChaCha8Rng) -> f64 {
    let x = case.x.clone();
    let y = forward(&mut case, &x);
    let r = uniform(rng, y.dims(), -1.0, 1.0);
    case.layer.zero_grad();
    let dx = case.layer.backward(&r).unwrap();
    let mut worst: f64 = 0.0;

    let loss_at = |case: &mut Case, x: &Tensor<f64>| weighted_sum(&forward(case, x), &r);
    for i in 0..x.numel() {
        let mut xp = x.clone();
        xp.data_mut()[i] += STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= STEP;
        let numeric = (loss_at(&mut case, &xp) - loss_at(&mut case, &xm)) / (2.0 * STEP);
        worst = worst.max(rel_err(dx.data()[i], numeric));
    }

    let grads: Vec<Vec<f64>> = case.layer.params_mut().iter().map(|p| p.grad.data().to_vec()).collect();
    for (pi, analytic) in grads.iter().enumerate() {
        for i in 0..analytic.len() {
            let eval = |delta: f64, case: &mut Case| {
                let orig = {
                    let mut ps = case.layer.params_mut();
                    let v = &mut ps[pi].value.data_mut()[i];
                    let orig = *v;
                    *v = orig + delta;
                    orig
                };
                let l = loss_at(case, &x);
                case.layer.params_mut()[pi].value.data_mut()[i] = orig;
                l
            };
            let numeric = (eval(STEP, &mut case) - eval(-STEP, &mut case)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    worst
}

fn make_case(kind: LayerKind, rng: &mut ChaCha8Rng) -> Case {
    let batch = rng.random_range(1..=3);
    match kind {
        LayerKind::Conv2d => {
            let (cin, cout) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let k = [1, 3, 5, 7][rng.random_range(0..4)];
            let (h, w) = (rng.random_range(2..=7), rng.random_range(2..=6));
            let mut conv = Conv2d::new(cin, cout, k).unwrap();
            conv.init(rng);
            conv.bias = uniform(rng, &[cout], -0.5, 0.5);
            Case {
                layer: Layer::Conv2d(conv),
                x: uniform(rng, &[batch, cin, h, w], -1.0, 1.0),
                dropout_seed: None,
            }
        }
        LayerKind::BatchNorm => {
            let c = rng.random_range(1..=3);
            let mut bn = BatchNorm2d::new(c);
            bn.gamma = uniform(rng, &[c], 0.5, 1.5);
            bn.beta = uniform(rng, &[c], -0.5, 0.5);
            let (h, w) = (rng.random_range(2..=4), rng.random_range(2..=4));
            Case {
                layer: Layer::BatchNorm(bn),
                x: uniform(rng, &[batch.max(2), c, h, w], -1.0, 1.0),
                dropout_seed: None,
            }
        }
        LayerKind::Relu => Case {
            layer: Layer::Relu(Relu::new()),
            x: away_from_zero(rng, &[batch, 2, 3, 4]),
            dropout_seed: None,
        },
        LayerKind::AvgPool => {
            let (ph, pw) = (rng.random_range(1..=4), rng.random_range(1..=3));
            let (h, w) = (ph * rng.random_range(1..=3), pw * rng.random_range(1..=3));
            Case {
                layer: Layer::AvgPool(AvgPool2d::new(ph, pw)),
                x: uniform(rng, &[batch, 2, h, w], -1.0, 1.0),
                dropout_seed: None,
            }
        }
        LayerKind::GlobalPool => {
            // Frame means are separated by at least 0.05, far beyond the step.
            let (c, t, f) = (2, rng.random_range(1..=5), rng.random_range(1..=4));
            let mut x = uniform(rng, &[batch, c, t, f], -0.01, 0.01);
            for p in 0..batch * c {
                let mut levels: Vec<usize> = (0..t).collect();
                for i in (1..t).rev() {
                    levels.swap(i, rng.random_range(0..=i));
                }
                for (ti, &lvl) in levels.iter().enumerate() {
                    for v in &mut x.data_mut()[(p * t + ti) * f..(p * t + ti + 1) * f] {
                        *v += 0.05 * lvl as f64;
                    }
                }
            }
            Case {
                layer: Layer::GlobalPool(GlobalPool::new()),
                x,
                dropout_seed: None,
            }
        }
        LayerKind::Dense => {
            let (i, o) = (rng.random_range(1..=6), rng.random_range(1..=5));
            let mut d = Dense::new(i, o);
            d.init(rng);
            d.bias = uniform(rng, &[o], -0.5, 0.5);
            Case {
                layer: Layer::Dense(d),
                x: uniform(rng, &[batch, i], -1.0, 1.0),
                dropout_seed: None,
            }
        }
        LayerKind::Dropout => {
            let seed = rng.random();
            let rate = rng.random_range(0.1..0.7);
            Case {
                layer: Layer::Dropout(Dropout::new(rate, seed).unwrap()),
                x: uniform(rng, &[batch, 7], -1.0, 1.0),
                dropout_seed: Some(seed),
            }
        }
        LayerKind::Softmax => {
            let n = rng.random_range(2..=6);
            Case {
                layer: Layer::Softmax(Softmax::new()),
                x: uniform(rng, &[batch, n], -3.0, 3.0),
                dropout_seed: None,
            }
        }
    }
}

pub const LAYER_KINDS: [LayerKind; 8] = [
    LayerKind::Conv2d,
    LayerKind::BatchNorm,
    LayerKind::Relu,
    LayerKind::AvgPool,
    LayerKind::GlobalPool,
    LayerKind::Dense,
    LayerKind::Dropout,
    LayerKind::Softmax,
];

/// Worst relative error of one layer kind over `SEEDS` random draws.
pub fn check_layer_kind(kind: LayerKind) -> f64 {
    (0..SEEDS)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * seed + kind as u64);
            let case = make_case(kind, &mut rng);
            check_case(case, &mut rng)
        })
        .fold(0.0, f64::max)
}

fn soft_targets(rng: &mut ChaCha8Rng, batch: usize, n: usize) -> Tensor<f64> {
    let mut t = uniform(rng, &[batch, n], 0.01, 1.0);
    for row in t.data_mut().chunks_exact_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    t
}

/// Fused softmax + cross-entropy with respect to the logits, and plain
/// cross-entropy with respect to probabilities.
pub fn check_losses() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + seed);
        let (batch, n) = (rng.random_range(1..=4), rng.random_range(2..=10));
        let targets = soft_targets(&mut rng, batch, n);
        let logits = uniform(&mut rng, &[batch, n], -4.0, 4.0);
        let (_, grad, _) = softmax_cross_entropy(&logits, &targets).unwrap();
        for i in 0..logits.numel() {
            let at = |d: f64| {
                let mut l = logits.clone();
                l.data_mut()[i] += d;
                softmax_cross_entropy(&l, &targets).unwrap().0
            };
            worst = worst.max(rel_err(grad.data()[i], (at(STEP) - at(-STEP)) / (2.0 * STEP)));
        }
        let probs = soft_targets(&mut rng, batch, n);
        let (_, grad) = cross_entropy(&probs, &targets).unwrap();
        for i in 0..probs.numel() {
            let at = |d: f64| {
                let mut p = probs.clone();
                p.data_mut()[i] += d;
                cross_entropy(&p, &targets).unwrap().0
            };
            worst = worst.max(rel_err(grad.data()[i], (at(STEP) - at(-STEP)) / (2.0 * STEP)));
        }
    }
    worst
}

/// Whole-network check on a tiny Task1B input for both heads, on a random
/// subset of parameters. Convolution biases feeding batch normalisation have
/// an identically zero gradient; pairs where both values are within
/// `ZERO_GRAD` of zero count as agreeing.
pub fn check_network(head: Head, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec::task1b(8).with_head(head);
    let mut net = Network::<f64>::new(spec, seed).unwrap();
    let x = uniform(&mut rng, &[2, 1, 32, 8], -1.0, 1.0);
    let targets = soft_targets(&mut rng, 2, 3);
    let dropout_seed = rng.random();
    let loss = |net: &mut Network<f64>| {
        net.reseed_dropout(dropout_seed);
        net.loss_and_grad(&x, &targets).unwrap()
    };
    loss(&mut net);
    let grads: Vec<Vec<f64>> = net.params_mut().iter().map(|p| p.grad.data().to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (pi, g) in grads.iter().enumerate() {
        for _ in 0..4 {
            let i = rng.random_range(0..g.len());
            let mut at = |d: f64| {
                let orig = net.params_mut()[pi].value.data()[i];
                net.params_mut()[pi].value.data_mut()[i] = orig + d;
                let l = loss(&mut net);
                net.params_mut()[pi].value.data_mut()[i] = orig;
                l
            };
            let numeric = (at(STEP) - at(-STEP)) / (2.0 * STEP);
            if g[i].abs() < ZERO_GRAD && numeric.abs() < ZERO_GRAD {
                continue;
            }
            worst = worst.max(rel_err(g[i], numeric));
        }
    }
    worst
}
