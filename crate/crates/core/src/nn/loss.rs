use super::{shape_err, Real, Result, Softmax, Tensor};

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-15;

fn check(op: &'static str, a: &Tensor<impl Real>, b: &Tensor<impl Real>) -> Result<(usize, usize)> {
    if a.dims().len() != 2 || a.dims() != b.dims() {
        return Err(shape_err(op, format!("scores {:?} vs targets {:?}", a.dims(), b.dims())));
    }
    Ok((a.dims()[0], a.dims()[1]))
}

/// Mean over the batch of `-sum(target * ln(prob))`, plus the gradient with
/// respect to `probs`. Probabilities are clamped to `[PROB_FLOOR, 1]`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let (batch, _) = check("cross_entropy", probs, targets)?;
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.numel());
    for (&p, &t) in probs.data().iter().zip(targets.data()) {
        let p = p.f64().clamp(PROB_FLOOR, 1.0);
        let t = t.f64();
        if t != 0.0 {
            loss -= t * p.ln();
        }
        grad.push(T::of(-t / p * scale));
    }
    Ok((loss * scale, Tensor::from_vec(probs.dims(), grad)?))
}

/// Softmax followed by cross-entropy. Returns `(loss, d loss / d logits,
/// probabilities)`; the gradient is the fused `(p - y) / batch`, which assumes
/// every target row sums to one.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (batch, _) = check("softmax_cross_entropy", logits, targets)?;
    let probs = Softmax::probabilities(logits);
    let (loss, _) = cross_entropy(&probs, targets)?;
    let scale = 1.0 / batch as f64;
    let grad = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &t)| T::of((p.f64() - t.f64()) * scale))
        .collect();
    Ok((loss, Tensor::from_vec(logits.dims(), grad)?, probs))
}
