use rand::Rng;

use super::{bias_uniform, dims2, kaiming_uniform, NnError, Result};
use crate::tensor::{gemm_into, Element, Shape, Tensor, TensorError};

/// Fully connected layer, `y = x·Wᵀ + b` on `[N, in]` batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<E: Element = f32> {
    /// `[out, in]`
    pub weight: Tensor<E>,
    /// `[out]`
    pub bias: Tensor<E>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads<E: Element = f32> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Linear<E> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Linear<E>> {
        Ok(Linear {
            weight: kaiming_uniform(&[outputs, inputs], inputs, rng)?,
            bias: bias_uniform(&[outputs], inputs, rng)?,
        })
    }

    pub fn from_parts(weight: Tensor<E>, bias: Tensor<E>) -> Result<Linear<E>> {
        weight.expect_rank(2)?;
        if bias.dims() != [weight.dims()[0]] {
            return Err(TensorError::ShapeMismatch {
                left: weight.dims().to_vec(),
                right: bias.dims().to_vec(),
            }
            .into());
        }
        Ok(Linear { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.dims()[0]
    }

    fn check(&self, x: &Tensor<E>) -> Result<usize> {
        let (n, f) = dims2(x)?;
        if f != self.inputs() {
            return Err(NnError::ChannelMismatch { expected: self.inputs(), got: f });
        }
        Ok(n)
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let n = self.check(x)?;
        let (inp, out) = (self.inputs(), self.outputs());
        let mut y: Vec<E> = (0..n).flat_map(|_| self.bias.data().iter().copied()).collect();
        gemm_into(n, inp, out, x.data(), false, self.weight.data(), true, &mut y, true);
        Ok(Tensor::from_parts(Shape::new(vec![n, out])?, y))
    }

    pub fn backward(&self, x: &Tensor<E>, grad_out: &Tensor<E>) -> Result<LinearGrads<E>> {
        let n = self.check(x)?;
        let (inp, out) = (self.inputs(), self.outputs());
        if grad_out.dims() != [n, out] {
            return Err(TensorError::ShapeMismatch {
                left: vec![n, out],
                right: grad_out.dims().to_vec(),
            }
            .into());
        }
        let g = grad_out.data();
        let mut dx = vec![E::zero(); n * inp];
        gemm_into(n, out, inp, g, false, self.weight.data(), false, &mut dx, false);
        let mut dw = vec![E::zero(); out * inp];
        gemm_into(out, n, inp, g, true, x.data(), false, &mut dw, false);
        let mut db = vec![E::zero(); out];
        for row in g.chunks_exact(out) {
            for (b, &v) in db.iter_mut().zip(row) {
                *b = *b + v;
            }
        }
        Ok(LinearGrads {
            input: Tensor::from_parts(x.shape().clone(), dx),
            weight: Tensor::from_parts(self.weight.shape().clone(), dw),
            bias: Tensor::from_parts(self.bias.shape().clone(), db),
        })
    }
}
