use rand::Rng;

use super::{Mode, NnError, Result};
use crate::tensor::{Element, Tensor, TensorError};

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` at train time so
/// that evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    p: f64,
}

/// Per-element multiplier applied in the forward pass (0 or `1/(1-p)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<E: Element = f32> {
    scale: Vec<E>,
}

impl<E: Element> DropoutMask<E> {
    pub fn kept(&self) -> impl Iterator<Item = bool> + '_ {
        self.scale.iter().map(|s| !s.is_zero())
    }
}

impl Dropout {
    pub fn new(p: f64) -> Result<Dropout> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::InvalidProbability(p));
        }
        Ok(Dropout { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Returns `None` for the mask when the layer acted as the identity.
    pub fn forward<E: Element>(
        &self,
        x: &Tensor<E>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> (Tensor<E>, Option<DropoutMask<E>>) {
        if mode == Mode::Eval || self.p == 0.0 {
            return (x.clone(), None);
        }
        let keep = E::from_f64(1.0 / (1.0 - self.p));
        let scale: Vec<E> = (0..x.numel())
            .map(|_| if rng.random::<f64>() < self.p { E::zero() } else { keep })
            .collect();
        let y = x.data().iter().zip(&scale).map(|(&v, &s)| v * s).collect();
        (Tensor::from_parts(x.shape().clone(), y), Some(DropoutMask { scale }))
    }

    pub fn backward<E: Element>(
        &self,
        mask: Option<&DropoutMask<E>>,
        grad_out: &Tensor<E>,
    ) -> Result<Tensor<E>> {
        let Some(mask) = mask else {
            return Ok(grad_out.clone());
        };
        if mask.scale.len() != grad_out.numel() {
            return Err(TensorError::LengthMismatch {
                len: mask.scale.len(),
                shape: grad_out.dims().to_vec(),
            }
            .into());
        }
        let g = grad_out.data().iter().zip(&mask.scale).map(|(&v, &s)| v * s).collect();
        Ok(Tensor::from_parts(grad_out.shape().clone(), g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_probability() {
        assert_eq!(Dropout::new(1.0).unwrap_err(), NnError::InvalidProbability(1.0));
        assert!(Dropout::new(-0.1).is_err());
        assert!(Dropout::new(f64::NAN).is_err());
    }

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_tensor::<f32>(&[4, 8], &mut rng);
        let (y, mask) = Dropout::new(0.0).unwrap().forward(&x, Mode::Train, &mut rng);
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, _) = Dropout::new(0.7).unwrap().forward(&x, Mode::Eval, &mut rng);
        assert!(y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn zero_fraction_follows_bernoulli() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = Tensor::<f32>::create(&[100_000], 1.0).unwrap();
        let (y, _) = Dropout::new(0.3).unwrap().forward(&x, Mode::Train, &mut rng);
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeros - 0.3).abs() < 0.01, "zero fraction {zeros}");
        let kept = y.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / 0.7).abs() < 1e-6);
    }

    #[test]
    fn backward_reuses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let layer = Dropout::new(0.5).unwrap();
        let x = random_tensor::<f32>(&[64], &mut rng);
        let (_, mask) = layer.forward(&x, Mode::Train, &mut rng);
        let mask = mask.unwrap();
        let ones = Tensor::<f32>::create(&[64], 1.0).unwrap();
        let g = layer.backward(Some(&mask), &ones).unwrap();
        for (kept, &gv) in mask.kept().zip(g.data()) {
            assert_eq!(kept, gv != 0.0);
        }
    }
}
