use rand::Rng;

use super::{bias_uniform, dims4, kaiming_uniform, NnError, Result};
use crate::tensor::{gemm_into, Element, Shape, Tensor, TensorError};

pub const KERNEL_SIZE: usize = 4;

/// Zero padding on each side of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

/// A 4×4 kernel needs 3 padding pixels per axis to keep the spatial size.
pub const SAME_PADDING: Padding = Padding { top: 1, left: 1, bottom: 2, right: 2 };

/// Stride-1 2-D cross-correlation with a 4×4 kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<E: Element = f32> {
    /// `[out_channels, in_channels, 4, 4]`
    pub weight: Tensor<E>,
    /// `[out_channels]`
    pub bias: Tensor<E>,
    padding: Padding,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<E: Element = f32> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Conv2d<E> {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Result<Conv2d<E>> {
        let fan_in = in_channels * KERNEL_SIZE * KERNEL_SIZE;
        let weight =
            kaiming_uniform(&[out_channels, in_channels, KERNEL_SIZE, KERNEL_SIZE], fan_in, rng)?;
        let bias = bias_uniform(&[out_channels], fan_in, rng)?;
        Ok(Conv2d { weight, bias, padding: SAME_PADDING })
    }

    pub fn from_parts(weight: Tensor<E>, bias: Tensor<E>) -> Result<Conv2d<E>> {
        weight.expect_rank(4)?;
        let d = weight.dims();
        if d[2] != KERNEL_SIZE || d[3] != KERNEL_SIZE || bias.dims() != [d[0]] {
            return Err(TensorError::ShapeMismatch {
                left: d.to_vec(),
                right: bias.dims().to_vec(),
            }
            .into());
        }
        Ok(Conv2d { weight, bias, padding: SAME_PADDING })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.padding;
        (h + p.top + p.bottom + 1 - KERNEL_SIZE, w + p.left + p.right + 1 - KERNEL_SIZE)
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<(usize, usize, usize, usize)> {
        let (n, c, h, w) = dims4(x)?;
        if c != self.in_channels() {
            return Err(NnError::ChannelMismatch { expected: self.in_channels(), got: c });
        }
        Ok((n, c, h, w))
    }

    /// `[N, C_in, H, W] -> [N, C_out, H, W]`.
    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_size(h, w);
        let out_c = self.out_channels();
        let k = c * KERNEL_SIZE * KERNEL_SIZE;
        let positions = oh * ow;
        let mut cols = vec![E::zero(); k * positions];
        let mut out = vec![E::zero(); n * out_c * positions];
        let in_len = c * h * w;
        for (sample, dst) in out.chunks_exact_mut(out_c * positions).enumerate() {
            let src = &x.data()[sample * in_len..(sample + 1) * in_len];
            im2col(src, c, h, w, oh, ow, self.padding, &mut cols);
            for (o, plane) in dst.chunks_exact_mut(positions).enumerate() {
                plane.fill(self.bias.data()[o]);
            }
            gemm_into(out_c, k, positions, self.weight.data(), false, &cols, false, dst, true);
        }
        Ok(Tensor::from_parts(Shape::new(vec![n, out_c, oh, ow])?, out))
    }

    pub fn backward(&self, x: &Tensor<E>, grad_out: &Tensor<E>) -> Result<ConvGrads<E>> {
        let (n, c, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_size(h, w);
        let out_c = self.out_channels();
        if grad_out.dims() != [n, out_c, oh, ow] {
            return Err(TensorError::ShapeMismatch {
                left: vec![n, out_c, oh, ow],
                right: grad_out.dims().to_vec(),
            }
            .into());
        }
        let k = c * KERNEL_SIZE * KERNEL_SIZE;
        let positions = oh * ow;
        let in_len = c * h * w;
        let mut cols = vec![E::zero(); k * positions];
        let mut grad_cols = vec![E::zero(); k * positions];
        let mut grad_w = vec![E::zero(); out_c * k];
        let mut grad_b = vec![E::zero(); out_c];
        let mut grad_x = vec![E::zero(); n * in_len];

        for sample in 0..n {
            let src = &x.data()[sample * in_len..(sample + 1) * in_len];
            let g = &grad_out.data()[sample * out_c * positions..(sample + 1) * out_c * positions];
            im2col(src, c, h, w, oh, ow, self.padding, &mut cols);
            // dW += dY · colsᵀ
            gemm_into(out_c, positions, k, g, false, &cols, true, &mut grad_w, true);
            // dcols = Wᵀ · dY
            gemm_into(k, out_c, positions, self.weight.data(), true, g, false, &mut grad_cols, false);
            col2im(
                &grad_cols,
                c,
                h,
                w,
                oh,
                ow,
                self.padding,
                &mut grad_x[sample * in_len..(sample + 1) * in_len],
            );
            for (o, plane) in g.chunks_exact(positions).enumerate() {
                grad_b[o] = grad_b[o] + plane.iter().fold(E::zero(), |acc, &v| acc + v);
            }
        }

        Ok(ConvGrads {
            input: Tensor::from_parts(x.shape().clone(), grad_x),
            weight: Tensor::from_parts(self.weight.shape().clone(), grad_w),
            bias: Tensor::from_parts(self.bias.shape().clone(), grad_b),
        })
    }
}

/// Unfolds one `[C, H, W]` sample into a `[C·16, OH·OW]` patch matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<E: Element>(
    src: &[E],
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    pad: Padding,
    cols: &mut [E],
) {
    let positions = oh * ow;
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for ki in 0..KERNEL_SIZE {
            for kj in 0..KERNEL_SIZE {
                let row = (ch * KERNEL_SIZE + ki) * KERNEL_SIZE + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                let (j_lo, j_hi) = valid_range(ow, kj, pad.left, w);
                for i in 0..oh {
                    let out_row = &mut dst[i * ow..(i + 1) * ow];
                    let si = (i + ki) as isize - pad.top as isize;
                    if si < 0 || si >= h as isize || j_lo >= j_hi {
                        out_row.fill(E::zero());
                        continue;
                    }
                    let src_row = &plane[si as usize * w..(si as usize + 1) * w];
                    out_row[..j_lo].fill(E::zero());
                    out_row[j_hi..].fill(E::zero());
                    let s0 = j_lo + kj - pad.left;
                    out_row[j_lo..j_hi].copy_from_slice(&src_row[s0..s0 + (j_hi - j_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
#[allow(clippy::too_many_arguments)]
fn col2im<E: Element>(
    cols: &[E],
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    pad: Padding,
    dst: &mut [E],
) {
    let positions = oh * ow;
    for ch in 0..c {
        let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
        for ki in 0..KERNEL_SIZE {
            for kj in 0..KERNEL_SIZE {
                let row = (ch * KERNEL_SIZE + ki) * KERNEL_SIZE + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                let (j_lo, j_hi) = valid_range(ow, kj, pad.left, w);
                if j_lo >= j_hi {
                    continue;
                }
                for i in 0..oh {
                    let si = (i + ki) as isize - pad.top as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let s0 = j_lo + kj - pad.left;
                    let target = &mut plane[si as usize * w + s0..si as usize * w + s0 + (j_hi - j_lo)];
                    for (t, &g) in target.iter_mut().zip(&src[i * ow + j_lo..i * ow + j_hi]) {
                        *t = *t + g;
                    }
                }
            }
        }
    }
}

/// Output columns `j` in `[lo, hi)` whose input column `j + kj - left` is in bounds.
fn valid_range(ow: usize, kj: usize, left: usize, w: usize) -> (usize, usize) {
    let lo = left.saturating_sub(kj);
    let hi = (w + left).saturating_sub(kj).min(ow);
    (lo, hi.max(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradient, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop cross-correlation with explicit bounds checks.
    fn naive_conv(x: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
        let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
        let oc = weight.dims()[0];
        let mut out = vec![0.0; n * oc * h * w];
        for s in 0..n {
            for o in 0..oc {
                for i in 0..h {
                    for j in 0..w {
                        let mut acc = bias.data()[o];
                        for ch in 0..c {
                            for ki in 0..4 {
                                for kj in 0..4 {
                                    let yi = i as isize + ki as isize - 1;
                                    let xj = j as isize + kj as isize - 1;
                                    if yi < 0 || xj < 0 || yi >= h as isize || xj >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data()
                                        [((s * c + ch) * h + yi as usize) * w + xj as usize];
                                    let wv = weight.data()[((o * c + ch) * 4 + ki) * 4 + kj];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out[((s * oc + o) * h + i) * w + j] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_weights_give_bias_planes() {
        let weight = Tensor::<f32>::zeros(&[2, 3, 4, 4]).unwrap();
        let bias = Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap();
        let conv = Conv2d::from_parts(weight, bias).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor::<f32>(&[1, 3, 5, 7], &mut rng);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.dims(), &[1, 2, 5, 7]);
        assert!(y.data()[..35].iter().all(|&v| v == 0.5));
        assert!(y.data()[35..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn keeps_spatial_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d::<f32>::new(3, 64, &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 3, 96, 96]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().dims(), &[1, 64, 96, 96]);
    }

    #[test]
    fn channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Conv2d::<f32>::new(3, 4, &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 2, 8, 8]).unwrap();
        assert_eq!(
            conv.forward(&x).unwrap_err(),
            NnError::ChannelMismatch { expected: 3, got: 2 }
        );
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(n, c, oc, h, w) in &[(1, 1, 1, 6, 6), (2, 3, 4, 5, 7), (1, 2, 3, 1, 1), (1, 1, 2, 2, 3)] {
            let conv = Conv2d::<f64>::new(c, oc, &mut rng).unwrap();
            let x = random_tensor::<f64>(&[n, c, h, w], &mut rng);
            let got = conv.forward(&x).unwrap();
            let want = naive_conv(&x, &conv.weight, &conv.bias);
            for (g, w) in got.data().iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = Conv2d::<f32>::new(2, 3, &mut rng).unwrap();
        let x = random_tensor::<f32>(&[2, 2, 5, 5], &mut rng);
        let g = conv.backward(&x, &Tensor::zeros(&[2, 3, 5, 5]).unwrap()).unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn bias_grad_is_channel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let conv = Conv2d::<f64>::new(2, 3, &mut rng).unwrap();
        let x = random_tensor::<f64>(&[2, 2, 4, 4], &mut rng);
        let up = random_tensor::<f64>(&[2, 3, 4, 4], &mut rng);
        let g = conv.backward(&x, &up).unwrap();
        for o in 0..3 {
            let want: f64 = (0..2)
                .flat_map(|s| up.data()[(s * 3 + o) * 16..(s * 3 + o + 1) * 16].iter())
                .sum();
            assert!((g.bias.data()[o] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conv = Conv2d::<f64>::new(2, 3, &mut rng).unwrap();
        let x = random_tensor::<f64>(&[2, 2, 5, 6], &mut rng);
        let up = random_tensor::<f64>(&[2, 3, 5, 6], &mut rng);
        let grads = conv.backward(&x, &up).unwrap();
        let loss = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
            let y = c.forward(x).unwrap();
            y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        check_gradient(&x, &grads.input, 1e-4, 1e-5, |x| loss(&conv, x));
        check_gradient(&conv.weight, &grads.weight, 1e-4, 1e-5, |w| {
            loss(&Conv2d::from_parts(w.clone(), conv.bias.clone()).unwrap(), &x)
        });
        check_gradient(&conv.bias, &grads.bias, 1e-4, 1e-5, |b| {
            loss(&Conv2d::from_parts(conv.weight.clone(), b.clone()).unwrap(), &x)
        });
    }
}
