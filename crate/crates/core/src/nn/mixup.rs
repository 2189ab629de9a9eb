use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{shape_err, NnError, Real, Result, Tensor};

/// Mixup with `lambda_i ~ Beta(alpha, alpha)` per sample and partners taken
/// from a random permutation of the batch.
pub fn mixup<T: Real, R: Rng>(x: &Tensor<T>, y: &Tensor<T>, alpha: f64, rng: &mut R) -> Result<(Tensor<T>, Tensor<T>)> {
    let beta = Beta::new(alpha, alpha).map_err(|e| NnError::InvalidArgument {
        name: "alpha",
        detail: format!("{alpha}: {e}"),
    })?;
    let batch = x.dims().first().copied().unwrap_or(0);
    let mut perm: Vec<usize> = (0..batch).collect();
    perm.shuffle(rng);
    let lambdas: Vec<f64> = (0..batch).map(|_| beta.sample(rng)).collect();
    mixup_with(x, y, &perm, &lambdas)
}

/// `x~_i = l_i x_i + (1 - l_i) x_perm(i)`, same for the labels.
pub fn mixup_with<T: Real>(x: &Tensor<T>, y: &Tensor<T>, perm: &[usize], lambdas: &[f64]) -> Result<(Tensor<T>, Tensor<T>)> {
    let batch = x.dims().first().copied().unwrap_or(0);
    if y.dims().first() != Some(&batch) || perm.len() != batch || lambdas.len() != batch {
        return Err(shape_err(
            "mixup",
            format!(
                "inputs {:?}, labels {:?}, {} partners, {} weights",
                x.dims(),
                y.dims(),
                perm.len(),
                lambdas.len()
            ),
        ));
    }
    if let Some(&j) = perm.iter().find(|&&j| j >= batch) {
        return Err(shape_err("mixup", format!("partner index {j} outside batch of {batch}")));
    }
    let blend = |t: &Tensor<T>| {
        let mut out = Tensor::zeros(t.dims());
        for (i, (&j, &l)) in perm.iter().zip(lambdas).enumerate() {
            let (a, b) = (t.outer(i), t.outer(j));
            for ((o, &u), &v) in out.outer_mut(i).iter_mut().zip(a).zip(b) {
                *o = T::of(l * u.f64() + (1.0 - l) * v.f64());
            }
        }
        out
    };
    Ok((blend(x), blend(y)))
}
