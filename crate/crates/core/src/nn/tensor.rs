use super::{shape_err, Real, Result};

/// Dense row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(shape_err(
                "tensor",
                format!("{} values do not fill dims {dims:?} ({expected})", data.len()),
            ));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(shape_err(
                "reshape",
                format!("cannot view {:?} as {dims:?}", self.dims),
            ));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Leading-axis slice `i` (e.g. one sample of a batch).
    pub fn outer(&self, i: usize) -> &[T] {
        let stride = self.data.len() / self.dims[0];
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn outer_mut(&mut self, i: usize) -> &mut [T] {
        let stride = self.data.len() / self.dims[0];
        &mut self.data[i * stride..(i + 1) * stride]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-type conversion through `f64`.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Concatenate along axis 1 of `[b, c_i, ...]` tensors with equal trailing dims.
    pub fn concat_channels(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| shape_err("concat", "no tensors"))?;
        let batch = first.dims[0];
        let tail = &first.dims[2..];
        for p in parts {
            if p.dims[0] != batch || &p.dims[2..] != tail {
                return Err(shape_err(
                    "concat",
                    format!("cannot join {:?} with {:?}", first.dims, p.dims),
                ));
            }
        }
        let channels: usize = parts.iter().map(|p| p.dims[1]).sum();
        let mut dims = first.dims.clone();
        dims[1] = channels;
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..batch {
            for p in parts {
                data.extend_from_slice(p.outer(b));
            }
        }
        Ok(Tensor { dims, data })
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, widths: &[usize]) -> Result<Vec<Self>> {
        if widths.iter().sum::<usize>() != self.dims[1] {
            return Err(shape_err(
                "split",
                format!("widths {widths:?} do not sum to {} channels", self.dims[1]),
            ));
        }
        let batch = self.dims[0];
        let plane: usize = self.dims[2..].iter().product();
        let mut out: Vec<Tensor<T>> = widths
            .iter()
            .map(|&w| {
                let mut dims = self.dims.clone();
                dims[1] = w;
                Tensor {
                    dims,
                    data: Vec::with_capacity(batch * w * plane),
                }
            })
            .collect();
        for b in 0..batch {
            let mut offset = 0;
            let sample = self.outer(b);
            for (t, &w) in out.iter_mut().zip(widths) {
                t.data.extend_from_slice(&sample[offset * plane..(offset + w) * plane]);
                offset += w;
            }
        }
        Ok(out)
    }
}
