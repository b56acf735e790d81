//! Dense row-major tensors.
//!
//! Storage is a flat `Vec` with the last dimension fastest. There are no
//! views, strides or broadcasting: every binary operation requires identical
//! shapes and reports a [`TensorError`] otherwise. Image tensors use
//! channel-first `[C, H, W]` order, batches `[N, C, H, W]`.
//!
//! The element type is generic over [`Element`] so that gradient checks can
//! run the exact same layer code in `f64`; everything else uses `f32`.

use std::fmt;

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape(Vec<usize>),
    #[error("shape {0:?} has too many elements")]
    Overflow(Vec<usize>),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: Vec<usize> },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Floating point element type of a [`Tensor`].
pub trait Element: Float + Default + fmt::Debug + Send + Sync + 'static {
    /// `c = alpha * a·b + beta * c` with explicit row/column strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid `m×k`, `k×n` and `m×n`
    /// matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
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

    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    /// Little-endian byte encoding, used by the model file format.
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const BYTES: usize;
}

impl Element for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }

    const BYTES: usize = 4;
}

impl Element for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }

    const BYTES: usize = 8;
}

/// Row-major matrix product on raw slices: `c (m×n) = a (m×k) · b (k×n)`,
/// optionally reading either operand transposed and accumulating into `c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_into<E: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    a_transposed: bool,
    b: &[E],
    b_transposed: bool,
    c: &mut [E],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm lhs length");
    assert_eq!(b.len(), k * n, "gemm rhs length");
    assert_eq!(c.len(), m * n, "gemm output length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { E::one() } else { E::zero() };
    // SAFETY: lengths are asserted above and `c` is a distinct &mut borrow.
    unsafe {
        E::gemm(
            m,
            k,
            n,
            E::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Shape> {
        let dims = dims.into();
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape(dims));
        }
        let mut count: usize = 1;
        for &d in &dims {
            count = count
                .checked_mul(d)
                .filter(|&c| c <= isize::MAX as usize)
                .ok_or_else(|| TensorError::Overflow(dims.clone()))?;
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl TryFrom<&[usize]> for Shape {
    type Error = TensorError;

    fn try_from(dims: &[usize]) -> Result<Shape> {
        Shape::new(dims.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, PartialEq)]
pub struct Tensor<E: Element = f32> {
    shape: Shape,
    data: Vec<E>,
}

impl<E: Element> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        let head: Vec<_> = self.data.iter().take(PREVIEW).collect();
        write!(f, "Tensor{:?} {:?}", self.shape, head)?;
        if self.data.len() > PREVIEW {
            write!(f, "…")?;
        }
        Ok(())
    }
}

impl<E: Element> Tensor<E> {
    pub fn full(shape: Shape, fill: E) -> Tensor<E> {
        let data = vec![fill; shape.numel()];
        Tensor { shape, data }
    }

    /// Tensor of the given dims with every element set to `fill`.
    pub fn create(dims: &[usize], fill: E) -> Result<Tensor<E>> {
        if !fill.is_finite() {
            return Err(TensorError::NonFinite { index: 0 });
        }
        Ok(Tensor::full(Shape::new(dims.to_vec())?, fill))
    }

    pub fn zeros(dims: &[usize]) -> Result<Tensor<E>> {
        Tensor::create(dims, E::zero())
    }

    /// Wraps `data` after checking its length and that every value is finite.
    pub fn from_vec(dims: &[usize], data: Vec<E>) -> Result<Tensor<E>> {
        let shape = Shape::new(dims.to_vec())?;
        if data.len() != shape.numel() {
            return Err(TensorError::LengthMismatch { len: data.len(), shape: shape.0 });
        }
        check_finite(&data)?;
        Ok(Tensor { shape, data })
    }

    /// Unchecked constructor for kernels that already guarantee the length.
    pub(crate) fn from_parts(shape: Shape, data: Vec<E>) -> Tensor<E> {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    /// Mutable access for in-place parameter updates.
    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.data)
    }

    pub fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.shape.rank() != rank {
            return Err(TensorError::Rank { expected: rank, shape: self.dims().to_vec() });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Tensor<E> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn elementwise(&self, other: &Tensor<E>, op: BinaryOp) -> Result<Tensor<E>> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let f: fn(E, E) -> E = match op {
            BinaryOp::Add => |a, b| a + b,
            BinaryOp::Sub => |a, b| a - b,
            BinaryOp::Mul => |a, b| a * b,
        };
        let data: Vec<E> = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        check_finite(&data)?;
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.elementwise(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.elementwise(other, BinaryOp::Mul)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.expect_rank(2)?;
        other.expect_rank(2)?;
        let (m, k) = (self.dims()[0], self.dims()[1]);
        let (k2, n) = (other.dims()[0], other.dims()[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let mut out = vec![E::zero(); m * n];
        gemm_into(m, k, n, &self.data, false, &other.data, false, &mut out, false);
        check_finite(&out)?;
        Ok(Tensor { shape: Shape::new(vec![m, n])?, data: out })
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor<E>> {
        self.clone().into_reshape(dims)
    }

    pub fn into_reshape(self, dims: &[usize]) -> Result<Tensor<E>> {
        let shape = Shape::new(dims.to_vec())?;
        if shape.numel() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                left: self.dims().to_vec(),
                right: dims.to_vec(),
            });
        }
        Ok(Tensor { shape, data: self.data })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<E>]) -> Result<Tensor<E>> {
        let first = items.first().ok_or(TensorError::InvalidShape(vec![0]))?;
        let mut dims = vec![items.len()];
        dims.extend_from_slice(first.dims());
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(TensorError::ShapeMismatch {
                    left: first.dims().to_vec(),
                    right: t.dims().to_vec(),
                });
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { shape: Shape::new(dims)?, data })
    }

    /// The `index`-th slice along the leading axis.
    pub fn row(&self, index: usize) -> Result<Tensor<E>> {
        let dims = self.dims();
        if dims.len() < 2 || index >= dims[0] {
            return Err(TensorError::Rank { expected: 2, shape: dims.to_vec() });
        }
        let inner = &dims[1..];
        let len: usize = inner.iter().product();
        let data = self.data[index * len..(index + 1) * len].to_vec();
        Ok(Tensor { shape: Shape::new(inner.to_vec())?, data })
    }

    /// Converts to another element type (used by gradient checks).
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| F::from_f64(v.as_f64())).collect(),
        }
    }
}

fn check_finite<E: Element>(data: &[E]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(TensorError::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(dims: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_vec(dims, data.to_vec()).unwrap()
    }

    #[test]
    fn create_fills() {
        assert_eq!(Tensor::<f32>::create(&[2, 2], 0.0).unwrap().data(), &[0.0; 4]);
        assert_eq!(Tensor::<f32>::create(&[1], 7.5).unwrap().data(), &[7.5]);
        assert_eq!(Tensor::<f32>::create(&[3, 96, 96], 0.0).unwrap().numel(), 3 * 96 * 96);
    }

    #[test]
    fn create_rejects_bad_shapes() {
        assert_eq!(
            Tensor::<f32>::create(&[2, 0], 1.0).unwrap_err(),
            TensorError::InvalidShape(vec![2, 0])
        );
        assert!(Tensor::<f32>::create(&[], 1.0).is_err());
        assert!(matches!(
            Tensor::<f32>::create(&[usize::MAX, 2], 0.0),
            Err(TensorError::Overflow(_))
        ));
    }

    #[test]
    fn from_vec_rejects_nan_and_bad_length() {
        assert!(matches!(
            Tensor::from_vec(&[2], vec![1.0f32, f32::NAN]),
            Err(TensorError::NonFinite { index: 1 })
        ));
        assert!(matches!(
            Tensor::from_vec(&[3], vec![1.0f32]),
            Err(TensorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn elementwise_examples() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        let z = Tensor::zeros(&[2]).unwrap();
        assert_eq!(a.mul(&z).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        assert!(matches!(
            a.add(&t(&[1, 2], &[1.0, 1.0])),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn elementwise_overflow_is_an_error() {
        let a = t(&[1], &[f32::MAX]);
        assert!(matches!(a.add(&a), Err(TensorError::NonFinite { index: 0 })));
    }

    #[test]
    fn matmul_examples() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(eye.matmul(&m).unwrap(), m);
        assert_eq!(t(&[1, 2], &[1.0, 2.0]).matmul(&t(&[2, 1], &[3.0, 4.0])).unwrap().data(), &[11.0]);
        let z = Tensor::zeros(&[2, 3]).unwrap();
        let any = Tensor::from_vec(&[3, 4], (0..12).map(|v| v as f32).collect()).unwrap();
        let p = z.matmul(&any).unwrap();
        assert_eq!(p.dims(), &[2, 4]);
        assert!(p.data().iter().all(|&v| v == 0.0));
        assert!(matches!(z.matmul(&m), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn reshape_examples() {
        let a = Tensor::<f32>::zeros(&[128, 12, 12]).unwrap();
        assert_eq!(a.reshape(&[18432]).unwrap().dims(), &[18432]);
        let b = t(&[6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(b.reshape(&[6]).unwrap(), b);
        let c = b.reshape(&[2, 3]).unwrap().reshape(&[3, 2]).unwrap();
        assert_eq!(c.data(), b.data());
        assert!(b.reshape(&[4]).is_err());
    }

    #[test]
    fn stack_and_row() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.dims(), &[2, 2]);
        assert_eq!(s.row(1).unwrap(), b);
    }

    fn naive_matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
            }
        }
        out
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(-10.0f32..10.0, rows * cols)
    }

    proptest! {
        #[test]
        fn add_commutes(data in proptest::collection::vec(-1e6f32..1e6, 1..64)) {
            let a = Tensor::from_vec(&[data.len()], data.clone()).unwrap();
            let b = Tensor::from_vec(&[data.len()], data.iter().rev().copied().collect()).unwrap();
            let ab = a.add(&b).unwrap();
            let ba = b.add(&a).unwrap();
            prop_assert!(ab.data().iter().zip(ba.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        #[test]
        fn matmul_matches_triple_loop(
            (m, k, n, a, b) in (1usize..=8, 1usize..=8, 1usize..=8)
                .prop_flat_map(|(m, k, n)| (Just(m), Just(k), Just(n), matrix(m, k), matrix(k, n)))
        ) {
            let ta = Tensor::from_vec(&[m, k], a.clone()).unwrap();
            let tb = Tensor::from_vec(&[k, n], b.clone()).unwrap();
            let got = ta.matmul(&tb).unwrap();
            let want = naive_matmul(&a, &b, m, k, n);
            let scale = want.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            for (g, w) in got.data().iter().zip(&want) {
                prop_assert!((*g as f64 - w).abs() <= 1e-5 * scale);
            }
        }

        #[test]
        fn reshape_round_trip(rows in 1usize..10, cols in 1usize..10) {
            let data: Vec<f32> = (0..rows * cols).map(|v| v as f32).collect();
            let a = Tensor::from_vec(&[rows, cols], data).unwrap();
            let back = a.reshape(&[cols, rows]).unwrap().reshape(&[rows, cols]).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
