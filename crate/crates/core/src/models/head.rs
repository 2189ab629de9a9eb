use crate::nn::{shape_err, Real, Tensor};

use super::{ModelError, Result};

/// Frequency-mean frame vectors from one or more deep feature maps.
///
/// Each map is `[b, c_i, t, f_i]`; the result is `[b, t, sum(c_i)]` with the
/// channels of map 0 first.
pub fn frames_from_maps<T: Real>(maps: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = maps.first().ok_or_else(|| ModelError::InvalidInput("no feature maps".into()))?;
    let (batch, t) = (first.dims()[0], first.dims()[2]);
    if t == 0 {
        return Err(ModelError::InvalidInput("deep feature map has zero frames".into()));
    }
    for m in maps {
        let d = m.dims();
        if d.len() != 4 || d[0] != batch || d[2] != t || d[3] == 0 {
            return Err(shape_err("frames", format!("cannot combine {:?} with {:?}", first.dims(), d)).into());
        }
    }
    let width: usize = maps.iter().map(|m| m.dims()[1]).sum();
    let mut out = vec![T::zero(); batch * t * width];
    let mut offset = 0;
    for m in maps {
        let (c, f) = (m.dims()[1], m.dims()[3]);
        for b in 0..batch {
            let sample = m.outer(b);
            for ch in 0..c {
                for ti in 0..t {
                    let row = &sample[(ch * t + ti) * f..(ch * t + ti + 1) * f];
                    let mean = row.iter().map(|v| v.f64()).sum::<f64>() / f as f64;
                    out[(b * t + ti) * width + offset + ch] = T::of(mean);
                }
            }
        }
        offset += c;
    }
    Ok(Tensor::from_vec(&[batch, t, width], out)?)
}

/// Backward of [`frames_from_maps`]: spread each frame gradient uniformly over
/// the frequency bins of its source map.
pub fn maps_grad_from_frames<T: Real>(grad: &Tensor<T>, map_dims: &[Vec<usize>]) -> Result<Vec<Tensor<T>>> {
    let width: usize = map_dims.iter().map(|d| d[1]).sum();
    let (batch, t) = match map_dims.first() {
        Some(d) => (d[0], d[2]),
        None => return Ok(Vec::new()),
    };
    if grad.dims() != [batch, t, width] {
        return Err(shape_err("frames backward", format!("gradient {:?} vs frames [{batch}, {t}, {width}]", grad.dims())).into());
    }
    let mut out = Vec::with_capacity(map_dims.len());
    let mut offset = 0;
    for d in map_dims {
        let (c, f) = (d[1], d[3]);
        let inv_f = 1.0 / f as f64;
        let mut g = Tensor::zeros(d);
        for b in 0..batch {
            let sample = g.outer_mut(b);
            for ch in 0..c {
                for ti in 0..t {
                    let v = T::of(grad.data()[(b * t + ti) * width + offset + ch].f64() * inv_f);
                    sample[(ch * t + ti) * f..(ch * t + ti + 1) * f].fill(v);
                }
            }
        }
        offset += c;
        out.push(g);
    }
    Ok(out)
}
