use rand::Rng;

use crate::nn::{gemm, shape_err, sum_f64, transpose, Mode, NnError, Real, Result, Tensor};

/// Stride-1 "same" 2-D cross-correlation with bias, `k x k` kernel, `k` odd.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Real = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    /// When false, `backward` only accumulates parameter gradients and
    /// returns zeros for the input gradient (first layer of a network).
    pub input_grad: bool,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(NnError::InvalidArgument {
                name: "kernel",
                detail: format!("{kernel} is even; same padding needs an odd kernel"),
            });
        }
        let wdims = [out_channels, in_channels, kernel, kernel];
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel,
            weight: Tensor::zeros(&wdims),
            bias: Tensor::zeros(&[out_channels]),
            grad_weight: Tensor::zeros(&wdims),
            grad_bias: Tensor::zeros(&[out_channels]),
            input_grad: true,
            input: None,
        })
    }

    /// Kaiming-uniform weights (`bound = sqrt(6 / fan_in)`), zero bias.
    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        for w in self.weight.data_mut() {
            *w = T::of(rng.random_range(-bound..bound));
        }
        self.bias.fill(T::zero());
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let d = x.dims();
        if d.len() != 4 {
            return Err(shape_err("conv2d", format!("expected [b, c, h, w], got {d:?}")));
        }
        if d[1] != self.in_channels {
            return Err(shape_err(
                "conv2d",
                format!("input has {} channels, layer expects {}", d[1], self.in_channels),
            ));
        }
        Ok((d[0], d[2], d[3]))
    }

    /// Unfold one `[c, h, w]` sample into `[c*k*k, h*w]` patch columns.
    fn im2col(&self, x: &[T], h: usize, w: usize, cols: &mut [T]) {
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        for c in 0..self.in_channels {
            let plane = &x[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * hw..][..hw];
                    // Valid output columns for this horizontal offset.
                    let x_lo = pad.saturating_sub(kx).min(w);
                    let x_hi = (w + pad).saturating_sub(kx).min(w).max(x_lo);
                    for y in 0..h {
                        let out = &mut row[y * w..(y + 1) * w];
                        let iy = y as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        out[..x_lo].fill(T::zero());
                        out[x_hi..].fill(T::zero());
                        let shift = x_lo + kx - pad;
                        out[x_lo..x_hi].copy_from_slice(&src[shift..shift + (x_hi - x_lo)]);
                    }
                }
            }
        }
    }

    /// Same patches as [`Conv2d::im2col`] laid out `[h*w, c*k*k]`.
    fn im2col_t(&self, x: &[T], h: usize, w: usize, out: &mut [T]) {
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        let rows = self.patch_rows();
        for y in 0..h {
            for xx in 0..w {
                let dst = &mut out[(y * w + xx) * rows..][..rows];
                let kx_lo = pad.saturating_sub(xx);
                let kx_hi = (w + pad - xx).min(k);
                for c in 0..self.in_channels {
                    let plane = &x[c * hw..(c + 1) * hw];
                    for ky in 0..k {
                        let seg = &mut dst[(c * k + ky) * k..][..k];
                        let iy = y as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            seg.fill(T::zero());
                            continue;
                        }
                        seg[..kx_lo].fill(T::zero());
                        seg[kx_hi..].fill(T::zero());
                        let start = iy as usize * w + xx + kx_lo - pad;
                        seg[kx_lo..kx_hi].copy_from_slice(&plane[start..start + (kx_hi - kx_lo)]);
                    }
                }
            }
        }
    }

    /// Fold patch-column gradients back onto a `[c, h, w]` sample.
    fn col2im(&self, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * hw..][..hw];
                    let x_lo = pad.saturating_sub(kx).min(w);
                    let x_hi = (w + pad).saturating_sub(kx).min(w).max(x_lo);
                    for y in 0..h {
                        let iy = y as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &row[y * w + x_lo..y * w + x_hi];
                        let shift = x_lo + kx - pad;
                        let dst = &mut plane[iy as usize * w + shift..][..x_hi - x_lo];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, h, w) = self.check(x)?;
        let hw = h * w;
        let rows = self.patch_rows();
        let mut out = Tensor::zeros(&[batch, self.out_channels, h, w]);
        let mut cols = vec![T::zero(); rows * hw];
        for b in 0..batch {
            self.im2col(x.outer(b), h, w, &mut cols);
            let y = out.outer_mut(b);
            for (o, chunk) in y.chunks_exact_mut(hw).enumerate() {
                chunk.fill(self.bias.data()[o]);
            }
            gemm(self.out_channels, rows, hw, self.weight.data(), false, &cols, false, y, true);
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input = (mode == Mode::Train).then(|| x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(NnError::NoCache { op: "conv2d" })?;
        let (batch, h, w) = self.check(x)?;
        if grad_out.dims() != [batch, self.out_channels, h, w] {
            return Err(shape_err(
                "conv2d backward",
                format!("gradient {:?} does not match output [{batch}, {}, {h}, {w}]", grad_out.dims(), self.out_channels),
            ));
        }
        let hw = h * w;
        let rows = self.patch_rows();
        let mut dx = Tensor::zeros(x.dims());
        let mut cols_t = vec![T::zero(); rows * hw];
        let mut dy_t = vec![T::zero(); self.out_channels * hw];
        let mut dcols = if self.input_grad { vec![T::zero(); rows * hw] } else { Vec::new() };
        for b in 0..batch {
            let dy = grad_out.outer(b);
            // dW += dY . cols^T
            self.im2col_t(x.outer(b), h, w, &mut cols_t);
            transpose(self.out_channels, hw, dy, &mut dy_t);
            gemm(self.out_channels, hw, rows, &dy_t, true, &cols_t, false, self.grad_weight.data_mut(), true);
            for (o, chunk) in dy.chunks_exact(hw).enumerate() {
                let s = sum_f64(chunk);
                let g = &mut self.grad_bias.data_mut()[o];
                *g = *g + T::of(s);
            }
            if self.input_grad {
                // dcols = W^T . dY
                gemm(rows, self.out_channels, hw, self.weight.data(), true, dy, false, &mut dcols, false);
                self.col2im(&dcols, h, w, dx.outer_mut(b));
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop cross-correlation.
    fn reference(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let d = x.dims();
        let (b, c, h, w) = (d[0], d[1], d[2], d[3]);
        let k = conv.kernel as isize;
        let p = k / 2;
        let mut out = vec![0.0; b * conv.out_channels * h * w];
        for n in 0..b {
            for o in 0..conv.out_channels {
                for y in 0..h as isize {
                    for xx in 0..w as isize {
                        let mut acc = conv.bias.data()[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let (iy, ix) = (y + ky - p, xx + kx - p);
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let wv = conv.weight.data()[((o * c + ci) * k as usize + ky as usize) * k as usize + kx as usize];
                                    acc += wv * x.data()[((n * c + ci) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out[((n * conv.out_channels + o) * h + y as usize) * w + xx as usize] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (c_in, c_out, k, h, w) in [(2, 3, 3, 5, 4), (1, 2, 7, 9, 6), (3, 1, 5, 2, 3)] {
            let mut conv = Conv2d::<f64>::new(c_in, c_out, k).unwrap();
            conv.init(&mut rng);
            for b in conv.bias.data_mut() {
                *b = rng.random_range(-1.0..1.0);
            }
            let x = Tensor::from_vec(&[2, c_in, h, w], (0..2 * c_in * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let y = conv.infer(&x).unwrap();
            for (a, b) in y.data().iter().zip(reference(&conv, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernel() {
        let mut conv = Conv2d::<f32>::new(1, 1, 1).unwrap();
        conv.weight.data_mut()[0] = 1.0;
        let x = Tensor::from_vec(&[1, 1, 2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        assert_eq!(conv.infer(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut conv = Conv2d::<f32>::new(2, 3, 3).unwrap();
        conv.init(&mut ChaCha8Rng::seed_from_u64(1));
        conv.bias = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = conv.infer(&Tensor::zeros(&[1, 2, 4, 4])).unwrap();
        for (o, plane) in y.data().chunks(16).enumerate() {
            assert!(plane.iter().all(|&v| v == conv.bias.data()[o]));
        }
    }

    #[test]
    fn channel_mismatch_names_both_extents() {
        let conv = Conv2d::<f32>::new(3, 4, 3).unwrap();
        let err = conv.infer(&Tensor::zeros(&[1, 2, 4, 4])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
        assert!(Conv2d::<f32>::new(1, 1, 4).is_err());
    }
}
