use super::{dims4, NnError, Result};
use crate::tensor::{Element, Shape, Tensor, TensorError};

const WINDOW: usize = 2;

/// Flat input index of the maximum chosen for every output cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_dims: Vec<usize>,
    argmax: Vec<u32>,
}

/// Non-overlapping 2×2 max pooling, `[N, C, H, W] -> [N, C, H/2, W/2]`.
///
/// Trailing odd rows/columns are dropped. Ties go to the first element in
/// row-major window order.
pub fn max_pool2d<E: Element>(x: &Tensor<E>) -> Result<(Tensor<E>, PoolIndices)> {
    let (n, c, h, w) = dims4(x)?;
    if h < WINDOW || w < WINDOW {
        return Err(NnError::TooSmall { height: h, width: w, kernel: WINDOW });
    }
    let (oh, ow) = (h / WINDOW, w / WINDOW);
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + (i * WINDOW) * w + j * WINDOW;
                for di in 0..WINDOW {
                    for dj in 0..WINDOW {
                        let idx = base + (i * WINDOW + di) * w + j * WINDOW + dj;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best as u32);
            }
        }
    }
    let y = Tensor::from_parts(Shape::new(vec![n, c, oh, ow])?, out);
    Ok((y, PoolIndices { input_dims: x.dims().to_vec(), argmax }))
}

/// Routes each upstream gradient to the input position that won the max.
pub fn max_pool2d_backward<E: Element>(
    indices: &PoolIndices,
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    if grad_out.numel() != indices.argmax.len() {
        return Err(TensorError::LengthMismatch {
            len: grad_out.numel(),
            shape: indices.input_dims.clone(),
        }
        .into());
    }
    let shape = Shape::new(indices.input_dims.clone())?;
    let mut dx = vec![E::zero(); shape.numel()];
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        dx[idx as usize] = dx[idx as usize] + g;
    }
    Ok(Tensor::from_parts(shape, dx))
}
