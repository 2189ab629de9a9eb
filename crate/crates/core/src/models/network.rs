use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    cross_entropy, softmax_cross_entropy, AvgPool2d, BatchNorm2d, Conv2d, Dense, Dropout, GlobalPool, Layer, Mode,
    Param, Real, Relu, Sequential, Softmax, Tensor,
};

use super::head::{frames_from_maps, maps_grad_from_frames};
use super::{BlockDef, Fusion, Head, ModelError, NetworkSpec, Result};

/// One line of the layer table printed by `describe`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRow {
    pub stage: String,
    pub layer: String,
    pub params: usize,
}

#[derive(Debug, Clone)]
enum HeadCache<T: Real> {
    Standard {
        logits: Tensor<T>,
        widths: Vec<usize>,
    },
    Spsmt {
        frame_probs: Tensor<T>,
        probs: Tensor<T>,
        map_dims: Vec<Vec<usize>>,
    },
}

/// A CNN built from a [`NetworkSpec`].
///
/// `branches` hold the per-representation conv stacks (a single branch for
/// plain and early-fusion networks), `trunk` the shared conv blocks after
/// middle fusion, and `classifier` the FC stack without its final softmax.
#[derive(Debug, Clone)]
pub struct Network<T: Real = f32> {
    pub spec: NetworkSpec,
    pub branches: Vec<Sequential<T>>,
    pub trunk: Sequential<T>,
    pub classifier: Sequential<T>,
    pools: Vec<GlobalPool>,
    branch_widths: Vec<usize>,
    /// Channels each branch contributes to the trunk input (middle fusion).
    trunk_split: usize,
    cache: Option<HeadCache<T>>,
}

fn push_block<T: Real>(layers: &mut Vec<Layer<T>>, in_channels: usize, block: &BlockDef) -> Result<()> {
    let mut cin = in_channels;
    for _ in 0..block.convs {
        layers.push(Layer::Conv2d(Conv2d::new(cin, block.channels, block.kernel)?));
        layers.push(Layer::BatchNorm(BatchNorm2d::new(block.channels)));
        layers.push(Layer::Relu(Relu::new()));
        cin = block.channels;
    }
    if let Some((pt, pf)) = block.pool {
        layers.push(Layer::AvgPool(AvgPool2d::new(pt, pf)));
    }
    Ok(())
}

fn stack<T: Real>(in_channels: usize, blocks: &[BlockDef]) -> Result<Sequential<T>> {
    let mut layers = Vec::new();
    let mut cin = in_channels;
    for b in blocks {
        push_block(&mut layers, cin, b)?;
        cin = b.channels;
    }
    Ok(Sequential::new(layers))
}

impl<T: Real> Network<T> {
    /// Build and initialize from `seed` (Kaiming-uniform convs and dense
    /// layers; dropout draws from a stream derived from the same seed).
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::build(spec)?;
        net.init(seed);
        Ok(net)
    }

    /// Build with all-zero weights.
    pub fn build(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let arch = spec.architecture;
        let blocks = arch.blocks();
        let n = spec.in_channels;
        let mut trunk_split = 0;
        let (branches, trunk, branch_widths) = match spec.fusion {
            Fusion::Single | Fusion::Early => (vec![stack(n, &blocks)?], Sequential::default(), vec![n]),
            Fusion::Middle { after_block } => {
                let split = after_block;
                let branches = (0..n).map(|_| stack(1, &blocks[..split])).collect::<Result<Vec<_>>>()?;
                trunk_split = blocks[split - 1].channels;
                let trunk = stack(n * trunk_split, &blocks[split..])?;
                (branches, trunk, vec![1; n])
            }
            Fusion::Late => {
                let branches = (0..n).map(|_| stack(1, &blocks)).collect::<Result<Vec<_>>>()?;
                (branches, Sequential::default(), vec![1; n])
            }
        };
        let mut branches = branches;
        for b in &mut branches {
            if let Some(Layer::Conv2d(c)) = b.layers.first_mut() {
                c.input_grad = false;
            }
        }
        let streams = if spec.fusion == Fusion::Late { n } else { 1 };
        let embedding = streams * arch.embedding();
        let classifier = Sequential::new(vec![
            Layer::Dense(Dense::new(embedding, arch.hidden())),
            Layer::Relu(Relu::new()),
            Layer::Dropout(Dropout::new(spec.dropout, 0)?),
            Layer::Dense(Dense::new(arch.hidden(), spec.n_classes)),
        ]);
        Ok(Network {
            pools: vec![GlobalPool::new(); streams],
            spec,
            branches,
            trunk,
            classifier,
            branch_widths,
            trunk_split,
            cache: None,
        })
    }

    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut self.branches {
            b.init(&mut rng);
        }
        self.trunk.init(&mut rng);
        self.classifier.init(&mut rng);
        let dropout_seed = rng.next_u64();
        self.classifier.reseed_dropout(dropout_seed);
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.classifier.reseed_dropout(seed);
    }

    /// Swap the classification head; parameter tensors are unaffected.
    pub fn set_head(&mut self, head: Head) {
        self.spec.head = head;
        self.cache = None;
    }

    pub fn param_count(&self) -> usize {
        self.sections().iter().map(|(_, s)| s.param_count()).sum()
    }

    fn sections(&self) -> Vec<(String, &Sequential<T>)> {
        let mut out: Vec<(String, &Sequential<T>)> = Vec::new();
        for (i, b) in self.branches.iter().enumerate() {
            let name = if self.branches.len() == 1 { "features".to_string() } else { format!("branch{i}") };
            out.push((name, b));
        }
        if !self.trunk.is_empty() {
            out.push(("trunk".into(), &self.trunk));
        }
        out.push(("classifier".into(), &self.classifier));
        out
    }

    /// Layer table in network order, one row per layer, plus the head pooling.
    pub fn describe(&self) -> Vec<LayerRow> {
        let mut rows = Vec::new();
        for (stage, seq) in self.sections() {
            if stage == "classifier" {
                let layer = match self.spec.head {
                    Head::Standard => "Global Pooling (mean f, max t)",
                    Head::Spsmt => "Frame vectors (mean f), shared classifier per frame",
                };
                rows.push(LayerRow {
                    stage: "head".into(),
                    layer: layer.into(),
                    params: 0,
                });
            }
            for l in &seq.layers {
                rows.push(LayerRow {
                    stage: stage.clone(),
                    layer: l.describe(),
                    params: l.param_count(),
                });
            }
        }
        let softmax = match self.spec.head {
            Head::Standard => "Softmax",
            Head::Spsmt => "Softmax per frame, mean over frames",
        };
        rows.push(LayerRow {
            stage: "classifier".into(),
            layer: softmax.into(),
            params: 0,
        });
        rows
    }

    /// Every parameter and buffer with a qualified name, in a fixed order.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        self.sections().into_iter().flat_map(|(name, s)| s.named_state(&name)).collect()
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let single = self.branches.len() == 1;
        let mut out = Vec::new();
        for (i, b) in self.branches.iter_mut().enumerate() {
            let name = if single { "features".to_string() } else { format!("branch{i}") };
            out.extend(b.named_state_mut(&name));
        }
        if !self.trunk.is_empty() {
            out.extend(self.trunk.named_state_mut("trunk"));
        }
        out.extend(self.classifier.named_state_mut("classifier"));
        out
    }

    pub fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            out.extend(b.params_mut());
        }
        out.extend(self.trunk.params_mut());
        out.extend(self.classifier.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.branches.iter_mut().for_each(Sequential::zero_grad);
        self.trunk.zero_grad();
        self.classifier.zero_grad();
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let d = x.dims();
        let (min_t, _) = self.spec.architecture.min_input();
        let ok = d.len() == 4 && d[0] > 0 && d[1] == self.spec.in_channels && d[3] == self.spec.n_bands;
        if !ok {
            return Err(ModelError::InputShape {
                expected: format!("[batch, {}, T, {}]", self.spec.in_channels, self.spec.n_bands),
                got: d.to_vec(),
            });
        }
        if d[2] < min_t {
            return Err(ModelError::InvalidInput(format!(
                "{} frames; the pooling stack needs at least {min_t}",
                d[2]
            )));
        }
        Ok(())
    }

    fn split_input(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if self.branches.len() == 1 {
            Ok(vec![x.clone()])
        } else {
            Ok(x.split_channels(&self.branch_widths)?)
        }
    }

    /// Deep feature maps `M'` (eval mode): one per late-fusion stream, else one.
    pub fn feature_maps(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(x)?;
        let parts = self.split_input(x)?;
        let outs = self
            .branches
            .iter()
            .zip(&parts)
            .map(|(b, p)| b.infer(p))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if self.trunk.is_empty() {
            Ok(outs)
        } else {
            Ok(vec![self.trunk.infer(&Tensor::concat_channels(&outs)?)?])
        }
    }

    fn feature_maps_train(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        self.check_input(x)?;
        let parts = self.split_input(x)?;
        let mut outs = Vec::with_capacity(parts.len());
        for (b, p) in self.branches.iter_mut().zip(&parts) {
            outs.push(b.forward(p, mode)?);
        }
        if self.trunk.is_empty() {
            Ok(outs)
        } else {
            Ok(vec![self.trunk.forward(&Tensor::concat_channels(&outs)?, mode)?])
        }
    }

    fn maps_backward(&mut self, grads: Vec<Tensor<T>>) -> Result<()> {
        if self.trunk.is_empty() {
            for (b, g) in self.branches.iter_mut().zip(grads) {
                b.backward(&g)?;
            }
        } else {
            let g = self.trunk.backward(&grads[0])?;
            let widths = vec![self.trunk_split; self.branches.len()];
            for (b, g) in self.branches.iter_mut().zip(g.split_channels(&widths)?) {
                b.backward(&g)?;
            }
        }
        Ok(())
    }

    /// Post-softmax class probabilities `[batch, n_classes]` in eval mode.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.predict_with_head(x, self.spec.head)
    }

    /// Like [`Network::predict`] but scoring with `head` regardless of the spec.
    pub fn predict_with_head(&self, x: &Tensor<T>, head: Head) -> Result<Tensor<T>> {
        let maps = self.feature_maps(x)?;
        self.head_infer(&maps, head)
    }

    /// Apply a head to precomputed deep feature maps.
    pub fn head_infer(&self, maps: &[Tensor<T>], head: Head) -> Result<Tensor<T>> {
        match head {
            Head::Standard => {
                let pooled = maps
                    .iter()
                    .zip(&self.pools)
                    .map(|(m, p)| p.infer(m))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let emb = Tensor::concat_channels(&pooled)?;
                Ok(Softmax::probabilities(&self.classifier.infer(&emb)?))
            }
            Head::Spsmt => {
                let frames = frames_from_maps(maps)?;
                let (batch, t, width) = (frames.dims()[0], frames.dims()[1], frames.dims()[2]);
                let logits = self.classifier.infer(&frames.reshape(&[batch * t, width])?)?;
                Ok(mean_over_frames(&Softmax::probabilities(&logits), batch, t))
            }
        }
    }

    /// Forward pass that caches activations for [`Network::backward_loss`].
    /// Returns class probabilities.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let maps = self.feature_maps_train(x, mode)?;
        match self.spec.head {
            Head::Standard => {
                let mut pooled = Vec::with_capacity(maps.len());
                for (m, p) in maps.iter().zip(&mut self.pools) {
                    pooled.push(p.forward(m, mode)?);
                }
                let widths = pooled.iter().map(|p| p.dims()[1]).collect();
                let emb = Tensor::concat_channels(&pooled)?;
                let logits = self.classifier.forward(&emb, mode)?;
                let probs = Softmax::probabilities(&logits);
                self.cache = Some(HeadCache::Standard { logits, widths });
                Ok(probs)
            }
            Head::Spsmt => {
                let frames = frames_from_maps(&maps)?;
                let (batch, t, width) = (frames.dims()[0], frames.dims()[1], frames.dims()[2]);
                let logits = self.classifier.forward(&frames.reshape(&[batch * t, width])?, mode)?;
                let frame_probs = Softmax::probabilities(&logits);
                let probs = mean_over_frames(&frame_probs, batch, t);
                self.cache = Some(HeadCache::Spsmt {
                    frame_probs,
                    probs: probs.clone(),
                    map_dims: maps.iter().map(|m| m.dims().to_vec()).collect(),
                });
                Ok(probs)
            }
        }
    }

    /// Cross-entropy against soft `targets` for the last training forward
    /// pass; accumulates parameter gradients and returns the loss.
    pub fn backward_loss(&mut self, targets: &Tensor<T>) -> Result<f64> {
        let cache = self.cache.take().ok_or(crate::nn::NnError::NoCache { op: "network" })?;
        match cache {
            HeadCache::Standard { logits, widths } => {
                let (loss, dlogits, _) = softmax_cross_entropy(&logits, targets)?;
                let demb = self.classifier.backward(&dlogits)?;
                let parts = demb.split_channels(&widths)?;
                let mut grads = Vec::with_capacity(parts.len());
                for (p, g) in self.pools.iter_mut().zip(&parts) {
                    grads.push(p.backward(g)?);
                }
                self.maps_backward(grads)?;
                Ok(loss)
            }
            HeadCache::Spsmt {
                frame_probs,
                probs,
                map_dims,
            } => {
                let (loss, dprobs) = cross_entropy(&probs, targets)?;
                let (batch, n) = (probs.dims()[0], probs.dims()[1]);
                let t = frame_probs.dims()[0] / batch;
                let inv_t = 1.0 / t as f64;
                let mut dframe = Vec::with_capacity(frame_probs.numel());
                for b in 0..batch {
                    let row: Vec<T> = dprobs.outer(b).iter().map(|g| T::of(g.f64() * inv_t)).collect();
                    for _ in 0..t {
                        dframe.extend_from_slice(&row);
                    }
                }
                let dframe = Tensor::from_vec(&[batch * t, n], dframe)?;
                let dlogits = Softmax::backward_from(&frame_probs, &dframe)?;
                let dframes = self.classifier.backward(&dlogits)?;
                let width = dframes.dims()[1];
                let grads = maps_grad_from_frames(&dframes.reshape(&[batch, t, width])?, &map_dims)?;
                self.maps_backward(grads)?;
                Ok(loss)
            }
        }
    }

    /// Zero gradients, run a training forward pass and backpropagate the loss.
    pub fn loss_and_grad(&mut self, x: &Tensor<T>, targets: &Tensor<T>) -> Result<f64> {
        self.zero_grad();
        self.forward(x, Mode::Train)?;
        self.backward_loss(targets)
    }
}

fn mean_over_frames<T: Real>(frame_probs: &Tensor<T>, batch: usize, t: usize) -> Tensor<T> {
    let n = frame_probs.dims()[1];
    let mut out = Vec::with_capacity(batch * n);
    for b in 0..batch {
        for k in 0..n {
            let s: f64 = (0..t).map(|ti| frame_probs.data()[(b * t + ti) * n + k].f64()).sum();
            out.push(T::of(s / t as f64));
        }
    }
    Tensor::from_vec(&[batch, n], out).expect("batch x classes")
}
