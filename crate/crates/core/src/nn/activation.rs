use super::{same_shape, NnError, Result};
use crate::tensor::{Element, Shape, Tensor};

pub fn relu<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| if v > E::zero() { v } else { E::zero() })
}

/// Gradient of [`relu`] given its *input*; zero at and below the kink.
pub fn relu_backward<E: Element>(x: &Tensor<E>, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape(x, grad_out)?;
    let g = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > E::zero() { g } else { E::zero() })
        .collect();
    Ok(Tensor::from_parts(x.shape().clone(), g))
}

/// Row-wise `x_i - log Σ_j exp x_j` over the last axis, shifted by the row
/// maximum before exponentiating.
pub fn log_softmax<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    x.check_finite()?;
    let k = *x.dims().last().expect("rank >= 1");
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(k) {
        let max = row.iter().copied().fold(E::neg_infinity(), E::max);
        let sum = row.iter().fold(E::zero(), |acc, &v| acc + (v - max).exp());
        let log_z = max + sum.ln();
        out.extend(row.iter().map(|&v| v - log_z));
    }
    Ok(Tensor::from_parts(x.shape().clone(), out))
}

/// Gradient of [`log_softmax`] given its *output*:
/// `dx_i = g_i - softmax_i · Σ_j g_j`.
pub fn log_softmax_backward<E: Element>(
    log_probs: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    same_shape(log_probs, grad_out)?;
    let k = *log_probs.dims().last().expect("rank >= 1");
    let mut dx = Vec::with_capacity(grad_out.numel());
    for (lp, g) in log_probs.data().chunks_exact(k).zip(grad_out.data().chunks_exact(k)) {
        let total = g.iter().fold(E::zero(), |acc, &v| acc + v);
        dx.extend(lp.iter().zip(g).map(|(&l, &gv)| gv - l.exp() * total));
    }
    Ok(Tensor::from_parts(log_probs.shape().clone(), dx))
}

fn check_labels<E: Element>(log_probs: &Tensor<E>, labels: &[usize]) -> Result<(usize, usize)> {
    log_probs.expect_rank(2)?;
    let (n, k) = (log_probs.dims()[0], log_probs.dims()[1]);
    if labels.len() != n {
        return Err(NnError::LabelCount { expected: n, got: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::LabelOutOfRange { label, classes: k });
    }
    Ok((n, k))
}

/// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
pub fn nll_loss<E: Element>(log_probs: &Tensor<E>, labels: &[usize]) -> Result<E> {
    let (n, k) = check_labels(log_probs, labels)?;
    let total = labels
        .iter()
        .enumerate()
        .fold(E::zero(), |acc, (i, &l)| acc - log_probs.data()[i * k + l]);
    Ok(total / E::from_f64(n as f64))
}

/// Gradient of [`nll_loss`] with respect to the log-probabilities.
pub fn nll_backward<E: Element>(log_probs: &Tensor<E>, labels: &[usize]) -> Result<Tensor<E>> {
    let (n, k) = check_labels(log_probs, labels)?;
    let mut g = vec![E::zero(); n * k];
    let w = E::from_f64(-1.0 / n as f64);
    for (i, &l) in labels.iter().enumerate() {
        g[i * k + l] = w;
    }
    Ok(Tensor::from_parts(Shape::new(vec![n, k])?, g))
}
