mod activation;
mod conv;
mod dense;
mod norm;
mod pool;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use activation::{Dropout, Relu, Softmax};
pub use conv::Conv2d;
pub use dense::Dense;
pub use norm::BatchNorm2d;
pub use pool::{AvgPool2d, GlobalPool};

use super::{Mode, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    Relu,
    AvgPool,
    GlobalPool,
    Dense,
    Dropout,
    Softmax,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv2d => "Conv2d",
            LayerKind::BatchNorm => "BatchNorm",
            LayerKind::Relu => "ReLU",
            LayerKind::AvgPool => "AvgPool",
            LayerKind::GlobalPool => "GlobalPool",
            LayerKind::Dense => "Dense",
            LayerKind::Dropout => "Dropout",
            LayerKind::Softmax => "Softmax",
        };
        f.write_str(s)
    }
}

/// A trainable tensor together with its gradient accumulator.
pub struct Param<'a, T: Real> {
    pub name: &'static str,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a mut Tensor<T>,
}

#[derive(Debug, Clone)]
pub enum Layer<T: Real = f32> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    Relu(Relu<T>),
    AvgPool(AvgPool2d),
    GlobalPool(GlobalPool),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
    Softmax(Softmax<T>),
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::AvgPool(_) => LayerKind::AvgPool,
            Layer::GlobalPool(_) => LayerKind::GlobalPool,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Softmax(_) => LayerKind::Softmax,
        }
    }

    /// Human-readable hyperparameters, e.g. `Conv 7x7 @ 32`.
    pub fn describe(&self) -> String {
        match self {
            Layer::Conv2d(c) => format!("Conv {k}x{k} @ {} (in {})", c.out_channels, c.in_channels, k = c.kernel),
            Layer::BatchNorm(b) => format!("BN {}", b.channels),
            Layer::Relu(_) => "ReLU".into(),
            Layer::AvgPool(p) => format!("Avg Pooling {} x {}", p.ph, p.pw),
            Layer::GlobalPool(_) => "Global Pooling (mean f, max t)".into(),
            Layer::Dense(d) => format!("FC {} (in {})", d.outputs, d.inputs),
            Layer::Dropout(d) => format!("Dropout {}", d.rate),
            Layer::Softmax(_) => "Softmax".into(),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        match self {
            Layer::Conv2d(c) => c.init(rng),
            Layer::Dense(d) => d.init(rng),
            _ => {}
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Relu(l) => l.infer(x),
            Layer::AvgPool(l) => l.infer(x),
            Layer::GlobalPool(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
            Layer::Dropout(l) => l.infer(x),
            Layer::Softmax(l) => l.infer(x),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x, mode),
            Layer::AvgPool(l) => l.forward(x, mode),
            Layer::GlobalPool(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Softmax(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.backward(grad_out),
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::AvgPool(l) => l.backward(grad_out),
            Layer::GlobalPool(l) => l.backward(grad_out),
            Layer::Dense(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
            Layer::Softmax(l) => l.backward(grad_out),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            Layer::BatchNorm(b) => vec![("gamma", &b.gamma), ("beta", &b.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        let pair = |name, value, grad| Param { name, value, grad };
        match self {
            Layer::Conv2d(c) => vec![
                pair("weight", &mut c.weight, &mut c.grad_weight),
                pair("bias", &mut c.bias, &mut c.grad_bias),
            ],
            Layer::Dense(d) => vec![
                pair("weight", &mut d.weight, &mut d.grad_weight),
                pair("bias", &mut d.bias, &mut d.grad_bias),
            ],
            Layer::BatchNorm(b) => vec![
                pair("gamma", &mut b.gamma, &mut b.grad_gamma),
                pair("beta", &mut b.beta, &mut b.grad_beta),
            ],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state saved with checkpoints (BN running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm(b) => vec![("running_mean", &b.running_mean), ("running_var", &b.running_var)],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm(b) => vec![("running_mean", &mut b.running_mean), ("running_var", &mut b.running_var)],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }
}

/// Ordered layer stack.
#[derive(Debug, Clone, Default)]
pub struct Sequential<T: Real = f32> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Sequential { layers }
    }

    pub fn push(&mut self, layer: Layer<T>) {
        self.layers.push(layer);
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.layers.iter_mut().for_each(|l| l.init(rng));
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        for l in &mut self.layers {
            if let Layer::Dropout(d) = l {
                d.reseed(seed);
            }
        }
    }

    /// `(prefix.index.name, tensor)` for every trainable tensor, in layer order.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in l.params() {
                out.push((format!("{prefix}.{i}.{name}"), t));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Parameters followed by buffers, per layer, with qualified names.
    pub fn named_state(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in l.params().into_iter().chain(l.buffers()) {
                out.push((format!("{prefix}.{i}.{name}"), t));
            }
        }
        out
    }

    pub fn named_state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let names: Vec<&'static str> = l.params().iter().map(|(n, _)| *n).collect();
            let mut tensors: Vec<&mut Tensor<T>> = Vec::new();
            match l {
                Layer::Conv2d(c) => tensors.extend([&mut c.weight, &mut c.bias]),
                Layer::Dense(d) => tensors.extend([&mut d.weight, &mut d.bias]),
                Layer::BatchNorm(b) => {
                    tensors.extend([&mut b.gamma, &mut b.beta, &mut b.running_mean, &mut b.running_var])
                }
                _ => {}
            }
            let all_names = names.into_iter().chain(["running_mean", "running_var"]);
            for (name, t) in all_names.zip(tensors) {
                out.push((format!("{prefix}.{i}.{name}"), t));
            }
        }
        out
    }
}
