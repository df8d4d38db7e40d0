//! Finite-difference gradient oracle shared by the layer unit tests.

use rand::Rng;

use super::{ForwardCache, LayerGrads};
use crate::tensor::Tensor;

pub(crate) const EPS: f64 = 1e-5;

pub(crate) fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

pub(crate) fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central differences of `L(x, θ) = Σ r ⊙ f(x; θ)` for a random projection
/// `r`, compared against the layer's backward pass. Returns the max relative
/// error over every input and parameter entry.
pub(crate) fn check_layer_gradients<L, R: Rng + ?Sized>(
    x: &Tensor<f64>,
    layer: &mut L,
    fwd: impl Fn(&L, &Tensor<f64>) -> Tensor<f64>,
    bwd: impl Fn(&L, &ForwardCache<f64>, &Tensor<f64>) -> LayerGrads<f64>,
    fwd_train: impl Fn(&L, &Tensor<f64>) -> ForwardCache<f64>,
    params: impl Fn(&mut L) -> Vec<&mut Tensor<f64>>,
    rng: &mut R,
) -> f64 {
    let cache = fwd_train(layer, x);
    let r = random_tensor(cache.output().shape(), rng);
    let grads = bwd(layer, &cache, &r);
    let objective = |l: &L, x: &Tensor<f64>| -> f64 {
        fwd(l, x).data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };

    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for k in 0..x.len() {
        let orig = xp.data()[k];
        xp.data_mut()[k] = orig + EPS;
        let up = objective(layer, &xp);
        xp.data_mut()[k] = orig - EPS;
        let down = objective(layer, &xp);
        xp.data_mut()[k] = orig;
        worst = worst.max(rel_err(grads.input.data()[k], (up - down) / (2.0 * EPS)));
    }
    for (p, analytic) in [&grads.weights, &grads.bias].into_iter().enumerate() {
        for k in 0..analytic.len() {
            let orig = params(layer)[p].data()[k];
            params(layer)[p].data_mut()[k] = orig + EPS;
            let up = objective(layer, x);
            params(layer)[p].data_mut()[k] = orig - EPS;
            let down = objective(layer, x);
            params(layer)[p].data_mut()[k] = orig;
            worst = worst.max(rel_err(analytic.data()[k], (up - down) / (2.0 * EPS)));
        }
    }
    worst
}
