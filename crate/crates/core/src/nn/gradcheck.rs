//! Central finite-difference oracle for the hand-written backward passes.

use rand::Rng;

use crate::tensor::{Element, Tensor};

pub fn random_tensor<E: Element>(dims: &[usize], rng: &mut impl Rng) -> Tensor<E> {
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| E::from_f64(rng.random_range(-1.0..1.0))).collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// Largest relative error between `analytic` and the central difference
/// `(f(p + eps) - f(p - eps)) / 2eps`, taken element by element.
pub fn max_relative_error<E: Element>(
    param: &Tensor<E>,
    analytic: &Tensor<E>,
    eps: f64,
    mut f: impl FnMut(&Tensor<E>) -> f64,
) -> f64 {
    assert_eq!(param.dims(), analytic.dims());
    let mut worst = 0.0f64;
    for i in 0..param.numel() {
        let mut plus = param.clone();
        plus.data_mut()[i] = E::from_f64(param.data()[i].as_f64() + eps);
        let mut minus = param.clone();
        minus.data_mut()[i] = E::from_f64(param.data()[i].as_f64() - eps);
        let numeric = (f(&plus) - f(&minus)) / (2.0 * eps);
        let exact = analytic.data()[i].as_f64();
        let denom = numeric.abs().max(exact.abs()).max(1e-3);
        worst = worst.max((numeric - exact).abs() / denom);
    }
    worst
}

pub fn check_gradient<E: Element>(
    param: &Tensor<E>,
    analytic: &Tensor<E>,
    eps: f64,
    tol: f64,
    f: impl FnMut(&Tensor<E>) -> f64,
) {
    let err = max_relative_error(param, analytic, eps, f);
    assert!(err < tol, "max relative error {err:e} exceeds {tol:e}");
}
