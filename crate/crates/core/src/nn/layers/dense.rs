use rand::Rng;

use crate::nn::{gemm, shape_err, Mode, NnError, Real, Result, Tensor};

/// Fully-connected layer: `y = x W^T + b` on `[batch, in]` input.
#[derive(Debug, Clone)]
pub struct Dense<T: Real = f32> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out, in]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
            grad_weight: Tensor::zeros(&[outputs, inputs]),
            grad_bias: Tensor::zeros(&[outputs]),
            input: None,
        }
    }

    /// Kaiming-uniform weights, zero bias.
    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let bound = (6.0 / self.inputs as f64).sqrt();
        for w in self.weight.data_mut() {
            *w = T::of(rng.random_range(-bound..bound));
        }
        self.bias.fill(T::zero());
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        let d = x.dims();
        if d.len() != 2 || d[1] != self.inputs {
            return Err(shape_err(
                "dense",
                format!("expected [b, {}], got {d:?}", self.inputs),
            ));
        }
        Ok(d[0])
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check(x)?;
        let mut out = Tensor::zeros(&[batch, self.outputs]);
        for row in out.data_mut().chunks_exact_mut(self.outputs) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(batch, self.inputs, self.outputs, x.data(), false, self.weight.data(), true, out.data_mut(), true);
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input = (mode == Mode::Train).then(|| x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache { op: "dense" })?;
        let batch = x.dims()[0];
        if grad_out.dims() != [batch, self.outputs] {
            return Err(shape_err(
                "dense backward",
                format!("gradient {:?} vs output [{batch}, {}]", grad_out.dims(), self.outputs),
            ));
        }
        gemm(self.outputs, batch, self.inputs, grad_out.data(), true, x.data(), false, self.grad_weight.data_mut(), true);
        for o in 0..self.outputs {
            let s: f64 = (0..batch).map(|b| grad_out.data()[b * self.outputs + o].f64()).sum();
            let g = &mut self.grad_bias.data_mut()[o];
            *g = *g + T::of(s);
        }
        let mut dx = Tensor::zeros(&[batch, self.inputs]);
        gemm(batch, self.outputs, self.inputs, grad_out.data(), false, self.weight.data(), false, dx.data_mut(), false);
        Ok(dx)
    }
}
