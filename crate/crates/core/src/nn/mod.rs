//! Layers of the counting network with hand-written backward passes.
//!
//! Every layer works on batched tensors (`[N, C, H, W]` for image layers,
//! `[N, F]` for dense ones). Forward functions return whatever the backward
//! pass needs as an explicit cache value; nothing is recorded implicitly, so
//! a backward call is a pure function of the forward inputs, the cache and
//! the upstream gradient.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod linear;
mod pool;

pub use activation::{
    log_softmax, log_softmax_backward, nll_backward, nll_loss, relu, relu_backward,
};
pub use batchnorm::{BatchNorm2d, BatchNormCache, BatchNormGrads};
pub use conv::{Conv2d, ConvGrads, Padding, KERNEL_SIZE, SAME_PADDING};
pub use dropout::{Dropout, DropoutMask};
pub use linear::{Linear, LinearGrads};
pub use pool::{max_pool2d, max_pool2d_backward, PoolIndices};

use rand::Rng;
use thiserror::Error;

use crate::tensor::{Element, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected {expected} input channels/features, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("batch norm in train mode needs at least 2 values per channel, got {0}")]
    DegenerateBatch(usize),
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{got} labels for a batch of {expected}")]
    LabelCount { expected: usize, got: usize },
    #[error("spatial size {height}x{width} is smaller than the {kernel}x{kernel} window")]
    TooSmall { height: usize, width: usize, kernel: usize },
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Whether stochastic and batch-statistics layers behave as in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Kaiming-uniform weights: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<E: Element>(
    dims: &[usize],
    fan_in: usize,
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    let bound = (6.0 / fan_in as f64).sqrt();
    uniform(dims, bound, rng)
}

/// Bias initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn bias_uniform<E: Element>(
    dims: &[usize],
    fan_in: usize,
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    uniform(dims, 1.0 / (fan_in as f64).sqrt(), rng)
}

fn uniform<E: Element>(dims: &[usize], bound: f64, rng: &mut impl Rng) -> Result<Tensor<E>> {
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| E::from_f64(rng.random_range(-bound..bound))).collect();
    Ok(Tensor::from_vec(dims, data)?)
}

/// Splits `[N, C, H, W]` into its four dims.
pub(crate) fn dims4<E: Element>(x: &Tensor<E>) -> Result<(usize, usize, usize, usize)> {
    x.expect_rank(4)?;
    let d = x.dims();
    Ok((d[0], d[1], d[2], d[3]))
}

pub(crate) fn dims2<E: Element>(x: &Tensor<E>) -> Result<(usize, usize)> {
    x.expect_rank(2)?;
    let d = x.dims();
    Ok((d[0], d[1]))
}

pub(crate) fn same_shape<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        }
        .into());
    }
    Ok(())
}

pub mod gradcheck;
