use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{shape_err, Mode, NnError, Real, Result, Tensor};

#[derive(Debug, Clone, Default)]
pub struct Relu<T: Real = f32> {
    active: Option<(Vec<usize>, Vec<bool>)>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Relu {
            active: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.active = (mode == Mode::Train).then(|| (x.dims().to_vec(), out.data().iter().map(|&v| v > T::zero()).collect()));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (dims, active) = self.active.as_ref().ok_or(NnError::NoCache { op: "relu" })?;
        if dims.as_slice() != grad_out.dims() {
            return Err(shape_err("relu backward", format!("{:?} vs {:?}", grad_out.dims(), dims)));
        }
        let data = grad_out
            .data()
            .iter()
            .zip(active)
            .map(|(&g, &on)| if on { g } else { T::zero() })
            .collect();
        Tensor::from_vec(dims, data)
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` in training;
/// identity in eval mode.
#[derive(Debug, Clone)]
pub struct Dropout<T: Real = f32> {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidArgument {
                name: "rate",
                detail: format!("dropout rate {rate} outside [0, 1)"),
            });
        }
        Ok(Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.clone())
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval {
            self.mask = None;
            return self.infer(x);
        }
        let keep = 1.0 - self.rate;
        let scale = T::of(1.0 / keep);
        let mask: Vec<T> = (0..x.numel())
            .map(|_| if self.rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_vec(x.dims(), data)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or(NnError::NoCache { op: "dropout" })?;
        if mask.len() != grad_out.numel() {
            return Err(shape_err("dropout backward", format!("{} vs {} units", grad_out.numel(), mask.len())));
        }
        let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
        Tensor::from_vec(grad_out.dims(), data)
    }
}

/// Row-wise softmax over the last axis, max-subtracted.
#[derive(Debug, Clone, Default)]
pub struct Softmax<T: Real = f32> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Softmax<T> {
    pub fn new() -> Self {
        Softmax { output: None }
    }

    pub fn probabilities(x: &Tensor<T>) -> Tensor<T> {
        let n = *x.dims().last().unwrap_or(&1);
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks_exact(n.max(1)) {
            let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            out.extend(exps.iter().map(|e| T::of(e / sum)));
        }
        Tensor::from_vec(x.dims(), out).expect("same dims")
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::probabilities(x))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let out = Self::probabilities(x);
        self.output = (mode == Mode::Train).then(|| out.clone());
        Ok(out)
    }

    /// Jacobian-vector product `y * (g - sum(g * y))` per row.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or(NnError::NoCache { op: "softmax" })?;
        Self::backward_from(y, grad_out)
    }

    pub fn backward_from(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if y.dims() != grad_out.dims() {
            return Err(shape_err("softmax backward", format!("{:?} vs {:?}", grad_out.dims(), y.dims())));
        }
        let n = *y.dims().last().unwrap_or(&1);
        let mut out = Vec::with_capacity(y.numel());
        for (yr, gr) in y.data().chunks_exact(n).zip(grad_out.data().chunks_exact(n)) {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a.f64() * b.f64()).sum();
            out.extend(yr.iter().zip(gr).map(|(a, b)| T::of(a.f64() * (b.f64() - dot))));
        }
        Tensor::from_vec(y.dims(), out)
    }
}
