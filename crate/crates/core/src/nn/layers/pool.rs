use crate::nn::{shape_err, Mode, NnError, Real, Result, Tensor};

/// Non-overlapping `ph x pw` mean pooling; trailing rows/columns that do not
/// fill a window are dropped.
#[derive(Debug, Clone)]
pub struct AvgPool2d {
    pub ph: usize,
    pub pw: usize,
    input_dims: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new(ph: usize, pw: usize) -> Self {
        AvgPool2d {
            ph,
            pw,
            input_dims: None,
        }
    }

    pub fn output_extent(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.ph, w / self.pw)
    }

    fn check(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != 4 {
            return Err(shape_err("avgpool", format!("expected [b, c, h, w], got {dims:?}")));
        }
        if self.ph == 0 || self.pw == 0 || self.ph > dims[2] || self.pw > dims[3] {
            return Err(shape_err(
                "avgpool",
                format!("pool {}x{} does not fit input {}x{}", self.ph, self.pw, dims[2], dims[3]),
            ));
        }
        Ok(())
    }

    pub fn infer<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let d = x.dims();
        self.check(d)?;
        let (planes, h, w) = (d[0] * d[1], d[2], d[3]);
        let (oh, ow) = self.output_extent(h, w);
        let scale = 1.0 / (self.ph * self.pw) as f64;
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut row_acc = vec![0.0f64; ow];
        for p in 0..planes {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                row_acc.fill(0.0);
                for y in oy * self.ph..(oy + 1) * self.ph {
                    let row = &plane[y * w..y * w + ow * self.pw];
                    for (acc, cell) in row_acc.iter_mut().zip(row.chunks_exact(self.pw)) {
                        *acc += cell.iter().map(|v| v.f64()).sum::<f64>();
                    }
                }
                out.extend(row_acc.iter().map(|&a| T::of(a * scale)));
            }
        }
        Tensor::from_vec(&[d[0], d[1], oh, ow], out)
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input_dims = (mode == Mode::Train).then(|| x.dims().to_vec());
        Ok(out)
    }

    pub fn backward<T: Real>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.input_dims.as_ref().ok_or(NnError::NoCache { op: "avgpool" })?;
        let (planes, h, w) = (d[0] * d[1], d[2], d[3]);
        let (oh, ow) = self.output_extent(h, w);
        if grad_out.dims() != [d[0], d[1], oh, ow] {
            return Err(shape_err(
                "avgpool backward",
                format!("gradient {:?} vs pooled [{}, {}, {oh}, {ow}]", grad_out.dims(), d[0], d[1]),
            ));
        }
        let scale = T::of(1.0 / (self.ph * self.pw) as f64);
        let mut dx = Tensor::zeros(d);
        for p in 0..planes {
            let g = &grad_out.data()[p * oh * ow..(p + 1) * oh * ow];
            let plane = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
            for y in 0..oh * self.ph {
                let grow = &g[(y / self.ph) * ow..(y / self.ph + 1) * ow];
                let row = &mut plane[y * w..y * w + ow * self.pw];
                for (cell, &gv) in row.chunks_exact_mut(self.pw).zip(grow) {
                    cell.fill(gv * scale);
                }
            }
        }
        Ok(dx)
    }
}

/// `[b, c, t, f] -> [b, c]`: mean over frequency, then max over time.
///
/// Backward routes the gradient to the first maximizing frame and spreads it
/// uniformly across that frame's frequency bins.
#[derive(Debug, Clone, Default)]
pub struct GlobalPool {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl GlobalPool {
    pub fn new() -> Self {
        Self::default()
    }

    fn pool<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let d = x.dims();
        if d.len() != 4 || d[2] == 0 || d[3] == 0 {
            return Err(shape_err("global_pool", format!("expected [b, c, t>=1, f>=1], got {d:?}")));
        }
        let (planes, t, f) = (d[0] * d[1], d[2], d[3]);
        let mut out = Vec::with_capacity(planes);
        let mut argmax = Vec::with_capacity(planes);
        for p in 0..planes {
            let plane = &x.data()[p * t * f..(p + 1) * t * f];
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for (ti, frame) in plane.chunks_exact(f).enumerate() {
                let m = frame.iter().map(|v| v.f64()).sum::<f64>() / f as f64;
                if m > best {
                    best = m;
                    best_t = ti;
                }
            }
            out.push(T::of(best));
            argmax.push(best_t);
        }
        Ok((Tensor::from_vec(&[d[0], d[1]], out)?, argmax))
    }

    pub fn infer<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::pool(x)?.0)
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (out, argmax) = Self::pool(x)?;
        self.cache = (mode == Mode::Train).then(|| (x.dims().to_vec(), argmax));
        Ok(out)
    }

    pub fn backward<T: Real>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (d, argmax) = self.cache.as_ref().ok_or(NnError::NoCache { op: "global_pool" })?;
        if grad_out.dims() != [d[0], d[1]] {
            return Err(shape_err(
                "global_pool backward",
                format!("gradient {:?} vs pooled [{}, {}]", grad_out.dims(), d[0], d[1]),
            ));
        }
        let (t, f) = (d[2], d[3]);
        let inv_f = T::of(1.0 / f as f64);
        let mut dx = Tensor::zeros(d);
        for (p, (&g, &at)) in grad_out.data().iter().zip(argmax).enumerate() {
            let frame = &mut dx.data_mut()[p * t * f + at * f..p * t * f + (at + 1) * f];
            frame.fill(g * inv_f);
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avgpool_constant_and_floor() {
        let x = Tensor::<f32>::full(&[1, 2, 858, 40], 2.5);
        let y = AvgPool2d::new(4, 2).infer(&x).unwrap();
        assert_eq!(y.dims(), &[1, 2, 214, 20]);
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn avgpool_values() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 4], (0..12).map(f64::from).collect()).unwrap();
        let y = AvgPool2d::new(2, 2).infer(&x).unwrap();
        // Row 2 is dropped.
        assert_eq!(y.data(), &[2.5, 4.5]);
    }

    #[test]
    fn avgpool_too_large() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 1]);
        assert!(AvgPool2d::new(2, 2).infer(&x).is_err());
        assert!(AvgPool2d::new(4, 1).infer(&x).is_err());
    }

    #[test]
    fn global_pool_constant_and_spike() {
        let x = Tensor::<f64>::full(&[2, 3, 5, 4], 1.25);
        assert!(GlobalPool::new().infer(&x).unwrap().data().iter().all(|&v| v == 1.25));

        let mut data = vec![0.0; 5 * 4];
        data[8..12].copy_from_slice(&[1.0, 2.0, 3.0, 6.0]);
        let x = Tensor::<f64>::from_vec(&[1, 1, 5, 4], data).unwrap();
        assert_eq!(GlobalPool::new().infer(&x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn global_pool_ties_pick_first_frame() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 1], vec![1.0, 1.0, 0.0]).unwrap();
        let mut gp = GlobalPool::new();
        gp.forward(&x, Mode::Train).unwrap();
        let dx = gp.backward(&Tensor::from_vec(&[1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0]);
    }
}
