use rand::Rng;

use super::{uniform_init, Activation, ForwardCache, LayerGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where `x > 0`, zero elsewhere (including at 0).
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_shape(x.shape())?;
    Tensor::from_vec(
        x.shape(),
        x.data()
            .iter()
            .zip(grad_out.data())
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    )
}

/// Fully connected layer. The input is flattened in row-major order, so any
/// spatial coordinates are lost; output shape is `[fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `[fan_in, fan_out]`
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Result<Self> {
        Ok(Self {
            fan_in,
            fan_out,
            weights: Tensor::zeros(&[fan_in, fan_out])?,
            bias: Tensor::zeros(&[fan_out])?,
            activation,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(fan_in, fan_out, activation)?;
        layer.weights = uniform_init(&[fan_in, fan_out], fan_in, rng)?;
        Ok(layer)
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let n: usize = input_shape.iter().product();
        if n != self.fan_in {
            return Err(Error::mismatch(&[self.fan_in], input_shape));
        }
        Ok(vec![self.fan_out])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.output)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.output_shape(x.shape())?;
        let w = self.weights.data();
        let mut out = self.bias.data().to_vec();
        for (r, &xv) in x.data().iter().enumerate() {
            let row = &w[r * self.fan_out..(r + 1) * self.fan_out];
            for (a, &wv) in out.iter_mut().zip(row) {
                *a += xv * wv;
            }
        }
        for v in &mut out {
            *v = self.activation.apply(*v);
        }
        Ok(ForwardCache {
            input: x.clone(),
            output: Tensor::from_vec(&[self.fan_out], out)?,
        })
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        if cache.input.len() != self.fan_in {
            return Err(Error::State(format!(
                "forward cache holds {} inputs, layer expects {}",
                cache.input.len(),
                self.fan_in
            )));
        }
        cache.check(cache.input.shape(), &[self.fan_out])?;
        grad_out.ensure_shape(&[self.fan_out])?;
        let gy = self.activation.gate(&cache.output, grad_out);
        let w = self.weights.data();
        let mut gw = vec![T::zero(); w.len()];
        let mut gx = Vec::with_capacity(self.fan_in);
        for (r, &xv) in cache.input.data().iter().enumerate() {
            let row = &w[r * self.fan_out..(r + 1) * self.fan_out];
            let grow = &mut gw[r * self.fan_out..(r + 1) * self.fan_out];
            let mut dx = T::zero();
            for ((gwv, &wv), &g) in grow.iter_mut().zip(row).zip(&gy) {
                *gwv = xv * g;
                dx += wv * g;
            }
            gx.push(dx);
        }
        Ok(LayerGrads {
            input: Tensor::from_vec(cache.input.shape(), gx)?,
            weights: Tensor::from_vec(&[self.fan_in, self.fan_out], gw)?,
            bias: Tensor::from_vec(&[self.fan_out], gy)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}
