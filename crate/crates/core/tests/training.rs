use ascnet::nn::{mixup, AdamState};
use ascnet::{Network, NetworkSpec, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(seed: u64, n: usize, frames: usize, bands: usize) -> (Tensor<f32>, Tensor<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * frames * bands);
    let mut y = vec![0f32; n * 3];
    for i in 0..n {
        let class = i % 3;
        y[i * 3 + class] = 1.0;
        for _ in 0..frames {
            for f in 0..bands {
                let bump = if f * 3 / bands == class { 1.5 } else { 0.0 };
                x.push(bump + rng.random_range(-1.0f32..1.0));
            }
        }
    }
    (
        Tensor::from_vec(&[n, 1, frames, bands], x).unwrap(),
        Tensor::from_vec(&[n, 3], y).unwrap(),
    )
}

fn train(seed: u64, steps: usize) -> (Network<f32>, Vec<f64>) {
    let (x, y) = batch(seed, 6, 64, 32);
    let mut net = Network::<f32>::new(NetworkSpec::task1b(32), seed).unwrap();
    let mut adam = AdamState::new(1e-3);
    let mut losses = Vec::new();
    for _ in 0..steps {
        net.reseed_dropout(seed);
        losses.push(net.loss_and_grad(&x, &y).unwrap());
        adam.step(net.params_mut()).unwrap();
    }
    (net, losses)
}

#[test]
fn full_batch_adam_strictly_decreases_the_loss() {
    for seed in [0, 1, 2] {
        let (_, losses) = train(seed, 11);
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "seed {seed}: {losses:?}");
        }
    }
}

#[test]
fn training_is_bit_deterministic() {
    let (a, la) = train(7, 100);
    let (b, lb) = train(7, 100);
    assert_eq!(la, lb);
    for ((ka, ta), (kb, tb)) in a.named_state().into_iter().zip(b.named_state()) {
        assert_eq!(ka, kb);
        assert_eq!(ta.data(), tb.data(), "{ka}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixup_keeps_label_mass_and_convexity(seed in any::<u64>(), n in 1usize..6, alpha in 0.05f64..2.0) {
        let (x, y) = batch(seed, n, 4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mx, my) = mixup(&x, &y, alpha, &mut rng).unwrap();
        prop_assert_eq!(mx.dims(), x.dims());
        for row in my.data().chunks(3) {
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            prop_assert!(row.iter().all(|v| (-1e-6..=1.0 + 1e-6).contains(v)));
        }
        let lo = x.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = x.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assert!(mx.data().iter().all(|v| *v >= lo - 1e-5 && *v <= hi + 1e-5));
    }
}
