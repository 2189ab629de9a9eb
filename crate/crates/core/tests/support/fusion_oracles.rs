#![allow(dead_code)]

use std::collections::BTreeMap;

use ascnet::nn::Softmax;
use ascnet::strategies::{spsmf_predict, spsmr_predict, spsmt_forward, Member, SubbandSplit};
use ascnet::{EnsembleBundle, FeatureKind, FeatureMap, Head, Network, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORACLE_TOL: f64 = 1e-12;
const KINDS: [FeatureKind; 4] = [FeatureKind::LogMel, FeatureKind::Cqt, FeatureKind::Gamma, FeatureKind::Mfcc];

fn map(kind: FeatureKind, frames: usize, bands: usize, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMap {
        values: (0..frames * bands).map(|_| rng.random_range(-3.0..3.0)).collect(),
        frames,
        bands,
        kind,
        sample_rate: 44100,
        hop: 512,
        window: 2048,
    }
}

/// `[1, 1, T, hi - lo]` tensor of a band range, sliced by hand.
fn tensor_of(m: &FeatureMap, lo: usize, hi: usize) -> Tensor<f32> {
    let mut data = Vec::with_capacity(m.frames * (hi - lo));
    for t in 0..m.frames {
        data.extend_from_slice(&m.values[t * m.bands + lo..t * m.bands + hi]);
    }
    Tensor::from_vec(&[1, 1, m.frames, hi - lo], data).unwrap()
}

pub fn brute_mean(lists: &[Vec<f64>]) -> Vec<f64> {
    let n = lists[0].len();
    (0..n).map(|k| lists.iter().map(|l| l[k]).sum::<f64>() / lists.len() as f64).collect()
}

fn assert_close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= ORACLE_TOL, "{x} vs {y}");
    }
}

pub fn assert_probability(p: &[f64]) {
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{p:?}");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6, "{p:?}");
}

fn probs_of(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| f64::from(v)).collect()
}

pub fn representation_bundle_matches_brute_force_mean() {
    let (frames, bands) = (80, 64);
    let mut members = Vec::new();
    let mut features = BTreeMap::new();
    let mut lists = Vec::new();
    for (i, kind) in KINDS.into_iter().enumerate() {
        let m = map(kind, frames, bands, 10 + i as u64);
        let net = Network::<f32>::new(NetworkSpec::task1b(bands), i as u64).unwrap();
        lists.push(probs_of(&net.predict(&tensor_of(&m, 0, bands)).unwrap()));
        members.push(Member::new(net, vec![kind], None).unwrap());
        features.insert(kind, m);
    }
    let bundle = EnsembleBundle::new(members).unwrap();
    let fused = spsmr_predict(&bundle, &features).unwrap();
    assert_close(fused.probs(), &brute_mean(&lists));
    assert_probability(fused.probs());
}

pub fn subband_bundle_matches_brute_force_mean() {
    let (frames, bands) = (80, 64);
    let m = map(FeatureKind::LogMel, frames, bands, 3);
    for (f, overlap) in [(2, 0), (2, 8), (4, 0)] {
        let split = SubbandSplit::new(bands, f, overlap).unwrap();
        let mut members = Vec::new();
        let mut lists = Vec::new();
        for (i, &(lo, hi)) in split.ranges.iter().enumerate() {
            let net = Network::<f32>::new(NetworkSpec::task1b(hi - lo), 20 + i as u64).unwrap();
            lists.push(probs_of(&net.predict(&tensor_of(&m, lo, hi)).unwrap()));
            members.push(Member::new(net, vec![FeatureKind::LogMel], Some((lo, hi))).unwrap());
        }
        let fused = spsmf_predict(&EnsembleBundle::new(members).unwrap(), &m).unwrap();
        assert_close(fused.probs(), &brute_mean(&lists));
        assert_probability(fused.probs());
    }
}

pub fn frame_head_matches_brute_force_mean_over_frames() {
    for (spec, frames, seed) in [(NetworkSpec::task1b(64), 200, 1), (NetworkSpec::task1a(40), 96, 2)] {
        let bands = spec.n_bands;
        let net = Network::<f32>::new(spec, seed).unwrap();
        let x = tensor_of(&map(FeatureKind::LogMel, frames, bands, seed), 0, bands);
        let maps = net.feature_maps(&x).unwrap();
        let d = maps[0].dims().to_vec();
        let (c, t, f) = (d[1], d[2], d[3]);
        assert!(t > 1);
        let mut rows = vec![0f32; t * c];
        for ch in 0..c {
            for ti in 0..t {
                let s: f64 = (0..f).map(|fi| f64::from(maps[0].data()[(ch * t + ti) * f + fi])).sum();
                rows[ti * c + ch] = (s / f as f64) as f32;
            }
        }
        let logits = net.classifier.infer(&Tensor::from_vec(&[t, c], rows).unwrap()).unwrap();
        let frame_probs = Softmax::probabilities(&logits);
        let lists: Vec<Vec<f64>> = frame_probs.data().chunks(net.spec.n_classes).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let oracle: Vec<f64> = brute_mean(&lists).into_iter().map(|v| f64::from(v as f32)).collect();
        let got = probs_of(&spsmt_forward(&net, &x).unwrap());
        assert_close(&got, &oracle);
        assert_probability(&got);
    }
}

pub fn one_subband_and_one_member_equal_the_plain_network() {
    let bands = 64;
    let m = map(FeatureKind::Cqt, 120, bands, 8);
    let net = Network::<f32>::new(NetworkSpec::task1b(bands), 4).unwrap();
    let plain = probs_of(&net.predict(&tensor_of(&m, 0, bands)).unwrap());

    let split = SubbandSplit::new(bands, 1, 0).unwrap();
    assert_eq!(split.ranges, vec![(0, bands)]);
    let bundle = EnsembleBundle::new(vec![Member::new(net.clone(), vec![FeatureKind::Cqt], Some((0, bands))).unwrap()]).unwrap();
    assert_eq!(spsmf_predict(&bundle, &m).unwrap().probs(), plain.as_slice());

    let bundle = EnsembleBundle::new(vec![Member::new(net, vec![FeatureKind::Cqt], None).unwrap()]).unwrap();
    let features = BTreeMap::from([(FeatureKind::Cqt, m)]);
    assert_eq!(spsmr_predict(&bundle, &features).unwrap().probs(), plain.as_slice());
}

pub fn one_deep_frame_makes_the_frame_head_equal_the_plain_head() {
    for (spec, frames) in [(NetworkSpec::task1b(64), 40), (NetworkSpec::task1a(40), 40)] {
        let bands = spec.n_bands;
        let net = Network::<f32>::new(spec, 6).unwrap();
        let x = tensor_of(&map(FeatureKind::Gamma, frames, bands, 2), 0, bands);
        assert_eq!(net.feature_maps(&x).unwrap()[0].dims()[2], 1);
        let plain = net.predict_with_head(&x, Head::Standard).unwrap();
        let framed = spsmt_forward(&net, &x).unwrap();
        assert_eq!(plain.data(), framed.data());
    }
}

