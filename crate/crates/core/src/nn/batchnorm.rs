use super::{dims4, same_shape, Mode, NnError, Result};
use crate::tensor::{Element, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `[N, C, H, W]`.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased one into the running estimate, `r <- (1 - m) r + m s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<E: Element = f32> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
    pub momentum: f64,
    pub eps: f64,
}

/// Values saved by the forward pass for [`BatchNorm2d::backward`].
#[derive(Debug, Clone)]
pub struct BatchNormCache<E: Element = f32> {
    mode: Mode,
    x_hat: Vec<E>,
    inv_std: Vec<E>,
    dims: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<E: Element = f32> {
    pub input: Tensor<E>,
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
}

impl<E: Element> BatchNorm2d<E> {
    pub fn new(channels: usize) -> Result<BatchNorm2d<E>> {
        Ok(BatchNorm2d {
            gamma: Tensor::create(&[channels], E::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::create(&[channels], E::one())?,
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Normalizes `x`; in train mode the running statistics are updated.
    pub fn forward(&mut self, x: &Tensor<E>, mode: Mode) -> Result<(Tensor<E>, BatchNormCache<E>)> {
        match mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => {
                let (y, cache, mean, var) = self.forward_train(x)?;
                let (n, _, h, w) = dims4(x)?;
                self.update_running(&mean, &var, n * h * w);
                Ok((y, cache))
            }
        }
    }

    /// Folds batch statistics from [`BatchNorm2d::forward_train`] into the
    /// running estimates. `count` is the number of values per channel.
    pub fn update_running(&mut self, mean: &[E], var: &[E], count: usize) {
        let m = E::from_f64(self.momentum);
        let keep = E::one() - m;
        let unbias = E::from_f64(count as f64 / (count as f64 - 1.0));
        for c in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = keep * *rm + m * mean[c];
            let rv = &mut self.running_var.data_mut()[c];
            *rv = keep * *rv + m * var[c] * unbias;
        }
    }

    /// Train-mode normalization without touching the running statistics.
    /// Returns the output, the cache and the per-channel batch mean and
    /// (biased) variance.
    pub fn forward_train(
        &self,
        x: &Tensor<E>,
    ) -> Result<(Tensor<E>, BatchNormCache<E>, Vec<E>, Vec<E>)> {
        let (n, c, h, w) = self.check(x)?;
        let plane = h * w;
        let count = n * plane;
        if count < 2 {
            return Err(NnError::DegenerateBatch(count));
        }
        let data = x.data();
        let mut mean = vec![E::zero(); c];
        let mut var = vec![E::zero(); c];
        let inv_count = E::from_f64(1.0 / count as f64);
        for ch in 0..c {
            let mut sum = E::zero();
            for s in 0..n {
                let off = (s * c + ch) * plane;
                sum = data[off..off + plane].iter().fold(sum, |acc, &v| acc + v);
            }
            let mu = sum * inv_count;
            let mut sq = E::zero();
            for s in 0..n {
                let off = (s * c + ch) * plane;
                sq = data[off..off + plane].iter().fold(sq, |acc, &v| acc + (v - mu) * (v - mu));
            }
            mean[ch] = mu;
            var[ch] = sq * inv_count;
        }
        let eps = E::from_f64(self.eps);
        let inv_std: Vec<E> = var.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
        let (y, x_hat) = self.normalize(x, &mean, &inv_std);
        let cache = BatchNormCache { mode: Mode::Train, x_hat, inv_std, dims: x.dims().to_vec() };
        Ok((y, cache, mean, var))
    }

    /// Normalizes with the running statistics; never mutates the layer.
    pub fn forward_eval(&self, x: &Tensor<E>) -> Result<(Tensor<E>, BatchNormCache<E>)> {
        self.check(x)?;
        let eps = E::from_f64(self.eps);
        let inv_std: Vec<E> =
            self.running_var.data().iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
        let (y, x_hat) = self.normalize(x, self.running_mean.data(), &inv_std);
        Ok((y, BatchNormCache { mode: Mode::Eval, x_hat, inv_std, dims: x.dims().to_vec() }))
    }

    fn check(&self, x: &Tensor<E>) -> Result<(usize, usize, usize, usize)> {
        let (n, c, h, w) = dims4(x)?;
        if c != self.channels() {
            return Err(NnError::ChannelMismatch { expected: self.channels(), got: c });
        }
        Ok((n, c, h, w))
    }

    fn normalize(&self, x: &Tensor<E>, mean: &[E], inv_std: &[E]) -> (Tensor<E>, Vec<E>) {
        let d = x.dims();
        let (c, plane) = (d[1], d[2] * d[3]);
        let mut y = Vec::with_capacity(x.numel());
        let mut x_hat = Vec::with_capacity(x.numel());
        for (i, chunk) in x.data().chunks_exact(plane).enumerate() {
            let ch = i % c;
            let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
            for &v in chunk {
                let xh = (v - mean[ch]) * inv_std[ch];
                x_hat.push(xh);
                y.push(g * xh + b);
            }
        }
        (Tensor::from_parts(x.shape().clone(), y), x_hat)
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<E>,
        grad_out: &Tensor<E>,
    ) -> Result<BatchNormGrads<E>> {
        if grad_out.dims() != cache.dims.as_slice() {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                left: cache.dims.clone(),
                right: grad_out.dims().to_vec(),
            }
            .into());
        }
        let d = &cache.dims;
        let (n, c, plane) = (d[0], d[1], d[2] * d[3]);
        let g = grad_out.data();
        let mut d_gamma = vec![E::zero(); c];
        let mut d_beta = vec![E::zero(); c];
        for (i, (gc, xc)) in g.chunks_exact(plane).zip(cache.x_hat.chunks_exact(plane)).enumerate() {
            let ch = i % c;
            for (&gv, &xh) in gc.iter().zip(xc) {
                d_beta[ch] = d_beta[ch] + gv;
                d_gamma[ch] = d_gamma[ch] + gv * xh;
            }
        }

        let mut dx = vec![E::zero(); g.len()];
        let count = E::from_f64((n * plane) as f64);
        for (i, out) in dx.chunks_exact_mut(plane).enumerate() {
            let ch = i % c;
            let scale = self.gamma.data()[ch] * cache.inv_std[ch];
            let gc = &g[i * plane..(i + 1) * plane];
            match cache.mode {
                Mode::Eval => {
                    for (o, &gv) in out.iter_mut().zip(gc) {
                        *o = scale * gv;
                    }
                }
                Mode::Train => {
                    // dx = gamma·inv_std/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
                    let xc = &cache.x_hat[i * plane..(i + 1) * plane];
                    let k = scale / count;
                    for ((o, &gv), &xh) in out.iter_mut().zip(gc).zip(xc) {
                        *o = k * (count * gv - d_beta[ch] - xh * d_gamma[ch]);
                    }
                }
            }
        }
        let input = Tensor::from_parts(grad_out.shape().clone(), dx);
        same_shape(&input, grad_out)?;
        Ok(BatchNormGrads {
            input,
            gamma: Tensor::from_parts(self.gamma.shape().clone(), d_gamma),
            beta: Tensor::from_parts(self.beta.shape().clone(), d_beta),
        })
    }
}
