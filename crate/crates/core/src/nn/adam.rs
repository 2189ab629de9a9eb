use super::{shape_err, NnError, Param, Real, Result, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam optimizer state. Moments are kept in `f64` and created lazily on the
/// first step, one pair per parameter tensor in visiting order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Tensor<f64>>,
    second: Vec<Tensor<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn moments(&self) -> (&[Tensor<f64>], &[Tensor<f64>]) {
        (&self.first, &self.second)
    }

    /// One bias-corrected update of every parameter from its accumulated
    /// gradient. Gradients are left untouched.
    pub fn step<T: Real>(&mut self, params: Vec<Param<'_, T>>) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.value.dims())).collect();
            self.second = self.first.clone();
        }
        if params.len() != self.first.len() {
            return Err(NnError::InvalidArgument {
                name: "params",
                detail: format!("{} tensors, optimizer tracks {}", params.len(), self.first.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            if p.value.dims() != m.dims() {
                return Err(shape_err(
                    "adam",
                    format!("`{}` is {:?}, moments are {:?}", p.name, p.value.dims(), m.dims()),
                ));
            }
            let values = p.value.data_mut().iter_mut();
            let grads = p.grad.data().iter();
            for (((w, g), m), v) in values.zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                let g = g.f64();
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = self.lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
                *w = T::of(w.f64() - update);
            }
        }
        Ok(())
    }
}
