use rand::Rng;

use crate::tensor::Tensor;

/// Largest translation in pixels along either axis.
pub const MAX_SHIFT: i32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugmentParams {
    pub flip: bool,
    pub dx: i32,
    pub dy: i32,
}

impl AugmentParams {
    pub fn sample(rng: &mut impl Rng) -> AugmentParams {
        AugmentParams {
            flip: rng.random_bool(0.5),
            dx: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            dy: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
        }
    }
}

/// Random horizontal flip and translation of a `[C, H, W]` image.
pub fn augment(x: &Tensor, rng: &mut impl Rng) -> Tensor {
    augment_with(x, AugmentParams::sample(rng))
}

/// Flip (if requested) and then shift right by `dx`, down by `dy`; the
/// vacated border is zero.
pub fn augment_with(x: &Tensor, p: AugmentParams) -> Tensor {
    let dims = x.dims();
    assert_eq!(dims.len(), 3, "augment expects a [C, H, W] tensor");
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    let src = x.data();
    let mut out = vec![0.0f32; src.len()];
    for ch in 0..c {
        let plane = ch * h * w;
        for y in 0..h {
            let sy = y as i64 - p.dy as i64;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for xo in 0..w {
                let mut sx = xo as i64 - p.dx as i64;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                if p.flip {
                    sx = w as i64 - 1 - sx;
                }
                out[plane + y * w + xo] = src[plane + sy as usize * w + sx as usize];
            }
        }
    }
    Tensor::from_parts(x.shape().clone(), out)
}
