//! Adam with bias correction and L2 weight decay.

use thiserror::Error;

use crate::tensor::{Element, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("expected {expected} parameter tensors, got {got}")]
    Count { expected: usize, got: usize },
    #[error("parameter {index}: shape {param:?} does not match gradient/state {other:?}")]
    Shape { index: usize, param: Vec<usize>, other: Vec<usize> },
    #[error("parameter {index}: non-finite gradient")]
    NonFiniteGradient { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// `false`: decay is added to the gradient (`g + wd·θ`) before the
    /// moment updates. `true`: AdamW-style `θ -= lr·wd·θ` outside them.
    pub decoupled: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            decoupled: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<E: Element = f32> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<E>>,
    v: Vec<Tensor<E>>,
}

impl<E: Element> Adam<E> {
    /// Zeroed moment buffers mirroring `params`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<E>>) -> Adam<E> {
        let m: Vec<Tensor<E>> =
            params.into_iter().map(|p| Tensor::full(p.shape().clone(), E::zero())).collect();
        Adam { config, step: 0, v: m.clone(), m }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<E>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<E>] {
        &self.v
    }

    /// Applies one update. Nothing is modified if any check fails.
    pub fn step(&mut self, params: &mut [&mut Tensor<E>], grads: &[Tensor<E>]) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::Count {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (index, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            for other in [g, m] {
                if p.shape() != other.shape() {
                    return Err(OptimError::Shape {
                        index,
                        param: p.dims().to_vec(),
                        other: other.dims().to_vec(),
                    });
                }
            }
            if g.check_finite().is_err() {
                return Err(OptimError::NonFiniteGradient { index });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = E::from_f64(c.beta1);
        let b2 = E::from_f64(c.beta2);
        let one = E::one();
        let lr = E::from_f64(c.lr);
        let wd = E::from_f64(c.weight_decay);
        let eps = E::from_f64(c.eps);
        let correct1 = E::from_f64(1.0 - c.beta1.powi(t));
        let correct2 = E::from_f64(1.0 - c.beta2.powi(t));

        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            let p = p.data_mut();
            for (((theta, &grad), m), v) in
                p.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                let grad = if c.decoupled { grad } else { grad + wd * *theta };
                *m = b1 * *m + (one - b1) * grad;
                *v = b2 * *v + (one - b2) * grad * grad;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                if c.decoupled {
                    *theta = *theta - lr * wd * *theta;
                }
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
