//! Deterministic CPU neural-network kernels.
//!
//! Layers cache what their backward pass needs during a [`Mode::Train`]
//! forward call and accumulate parameter gradients on `backward`. Eval-mode
//! inference goes through `infer(&self, ..)` and never mutates the layer, so a
//! frozen network can be shared across threads.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference verification.

mod adam;
mod gemm;
mod layers;
mod loss;
mod mixup;
mod tensor;

use std::fmt::Debug;

use thiserror::Error;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use gemm::{gemm, transpose};
pub use layers::{
    AvgPool2d, BatchNorm2d, Conv2d, Dense, Dropout, GlobalPool, Layer, LayerKind, Param, Relu, Sequential, Softmax,
};
pub use loss::{cross_entropy, softmax_cross_entropy, PROB_FLOOR};
pub use mixup::{mixup, mixup_with};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch, {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: backward called without a cached training forward pass")]
    NoCache { op: &'static str },
    #[error("invalid argument `{name}`: {detail}")]
    InvalidArgument { name: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::Shape {
        op,
        detail: detail.into(),
    }
}

/// `f64` sum with eight interleaved accumulators (fixed order, so results are
/// reproducible).
pub fn sum_f64<T: Real>(xs: &[T]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v.f64();
        }
    }
    let tail: f64 = chunks.remainder().iter().map(|v| v.f64()).sum();
    acc.iter().sum::<f64>() + tail
}

/// `sum((x - center)^2)` accumulated like [`sum_f64`].
pub fn sum_sq_dev_f64<T: Real>(xs: &[T], center: f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            let d = v.f64() - center;
            *a += d * d;
        }
    }
    let tail: f64 = chunks.remainder().iter().map(|v| (v.f64() - center).powi(2)).sum();
    acc.iter().sum::<f64>() + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// Floating-point element type: `f32` for training, `f64` for verification.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + Default + Debug + Send + Sync + 'static + std::iter::Sum
{
    /// `c = a . b (+ c)`; see [`gemm`] for the layout contract.
    ///
    /// # Safety
    ///
    /// The pointers and strides must address valid `m x k`, `k x n` and
    /// `m x n` matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite cast")
    }
}

impl Real for f32 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}
