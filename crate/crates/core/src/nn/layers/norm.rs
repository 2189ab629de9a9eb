use crate::nn::{shape_err, sum_f64, sum_sq_dev_f64, Mode, NnError, Real, Result, Tensor};

/// Per-channel batch normalization over `(batch, h, w)` of `[b, c, h, w]` input.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T: Real = f32> {
    pub channels: usize,
    pub epsilon: f64,
    /// Weight of the previous running value: `r <- m*r + (1-m)*batch`.
    pub momentum: f64,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T: Real> {
    normalized: Tensor<T>,
    inv_std: Vec<f64>,
}

impl<T: Real> BatchNorm2d<T> {
    pub const EPSILON: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            epsilon: Self::EPSILON,
            momentum: Self::MOMENTUM,
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cache: None,
        }
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let d = x.dims();
        if d.len() != 4 || d[1] != self.channels {
            return Err(shape_err(
                "batchnorm",
                format!("expected [b, {}, h, w], got {d:?}", self.channels),
            ));
        }
        Ok((d[0], d[2] * d[3]))
    }

    fn normalize(&self, x: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> (Tensor<T>, Tensor<T>) {
        let (batch, plane) = (x.dims()[0], x.dims()[2] * x.dims()[3]);
        let mut normalized = Tensor::zeros(x.dims());
        let mut out = Tensor::zeros(x.dims());
        for b in 0..batch {
            for c in 0..self.channels {
                let at = (b * self.channels + c) * plane;
                let (g, bt) = (self.gamma.data()[c].f64(), self.beta.data()[c].f64());
                let src = &x.data()[at..at + plane];
                let nrm = &mut normalized.data_mut()[at..at + plane];
                let dst = &mut out.data_mut()[at..at + plane];
                for ((n, d), &v) in nrm.iter_mut().zip(dst.iter_mut()).zip(src) {
                    let z = (v.f64() - mean[c]) * inv_std[c];
                    *n = T::of(z);
                    *d = T::of(g * z + bt);
                }
            }
        }
        (normalized, out)
    }

    /// Biased per-channel mean and variance, accumulated in `f64`.
    fn batch_stats(&self, x: &Tensor<T>) -> (Vec<f64>, Vec<f64>) {
        let (batch, plane) = (x.dims()[0], x.dims()[2] * x.dims()[3]);
        let n = (batch * plane) as f64;
        let mut mean = vec![0.0; self.channels];
        let mut var = vec![0.0; self.channels];
        for c in 0..self.channels {
            let mut s = 0.0;
            for b in 0..batch {
                let at = (b * self.channels + c) * plane;
                s += sum_f64(&x.data()[at..at + plane]);
            }
            let m = s / n;
            let mut ss = 0.0;
            for b in 0..batch {
                let at = (b * self.channels + c) * plane;
                ss += sum_sq_dev_f64(&x.data()[at..at + plane], m);
            }
            mean[c] = m;
            var[c] = ss / n;
        }
        (mean, var)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let mean: Vec<f64> = self.running_mean.data().iter().map(|v| v.f64()).collect();
        let inv_std: Vec<f64> = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v.f64() + self.epsilon).sqrt())
            .collect();
        Ok(self.normalize(x, &mean, &inv_std).1)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval {
            self.cache = None;
            return self.infer(x);
        }
        self.check(x)?;
        let (mean, var) = self.batch_stats(x);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let (normalized, out) = self.normalize(x, &mean, &inv_std);
        let m = self.momentum;
        for c in 0..self.channels {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = T::of(m * rm.f64() + (1.0 - m) * mean[c]);
            let rv = &mut self.running_var.data_mut()[c];
            *rv = T::of(m * rv.f64() + (1.0 - m) * var[c]);
        }
        self.cache = Some(Cache { normalized, inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NnError::NoCache { op: "batchnorm" })?;
        let xhat = &cache.normalized;
        if grad_out.dims() != xhat.dims() {
            return Err(shape_err(
                "batchnorm backward",
                format!("gradient {:?} vs activation {:?}", grad_out.dims(), xhat.dims()),
            ));
        }
        let (batch, plane) = (xhat.dims()[0], xhat.dims()[2] * xhat.dims()[3]);
        let n = (batch * plane) as f64;
        let mut dx = Tensor::zeros(xhat.dims());
        for c in 0..self.channels {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for b in 0..batch {
                let at = (b * self.channels + c) * plane;
                for (dy, xh) in grad_out.data()[at..at + plane].iter().zip(&xhat.data()[at..at + plane]) {
                    sum_dy += dy.f64();
                    sum_dy_xhat += dy.f64() * xh.f64();
                }
            }
            let g = self.gamma.data()[c].f64();
            let gg = &mut self.grad_gamma.data_mut()[c];
            *gg = T::of(gg.f64() + sum_dy_xhat);
            let gb = &mut self.grad_beta.data_mut()[c];
            *gb = T::of(gb.f64() + sum_dy);
            let scale = g * cache.inv_std[c] / n;
            for b in 0..batch {
                let at = (b * self.channels + c) * plane;
                let dst = &mut dx.data_mut()[at..at + plane];
                let dys = &grad_out.data()[at..at + plane];
                let xhs = &xhat.data()[at..at + plane];
                for ((d, dy), xh) in dst.iter_mut().zip(dys).zip(xhs) {
                    *d = T::of(scale * (n * dy.f64() - sum_dy - xh.f64() * sum_dy_xhat));
                }
            }
        }
        Ok(dx)
    }
}
