//! Layer forward and backward passes.
//!
//! Every layer exposes the same three calls: `forward` for inference,
//! `forward_train` which keeps a [`ForwardCache`], and `backward` which turns
//! an upstream gradient plus that cache into [`LayerGrads`]. Backward passes
//! are direct loops mirroring the forward definition.

mod conv;
mod dense;
mod local;

pub use conv::{Conv2d, Conv3d, SPATIAL_KERNEL};
pub use dense::{relu, relu_backward, Dense};
pub use local::LocallyConnected2d;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub(crate) fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Linear => v,
        }
    }

    /// Gates an upstream gradient using the layer's post-activation output.
    /// ReLU output is positive exactly where the pre-activation is positive.
    pub(crate) fn gate<T: Scalar>(self, output: &Tensor<T>, grad_out: &Tensor<T>) -> Vec<T> {
        match self {
            Activation::Relu => output
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                .collect(),
            Activation::Linear => grad_out.data().to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Input and output of one forward evaluation, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub(crate) input: Tensor<T>,
    pub(crate) output: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }

    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    pub fn into_output(self) -> Tensor<T> {
        self.output
    }

    fn check(&self, input_shape: &[usize], output_shape: &[usize]) -> Result<()> {
        if self.input.shape() != input_shape || self.output.shape() != output_shape {
            return Err(Error::State(format!(
                "forward cache with input {:?} does not belong to a layer expecting {:?}",
                self.input.shape(),
                input_shape
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Uniform `[-s, s]` with `s = sqrt(6 / fan_in)`.
pub(crate) fn uniform_init<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let s = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-s..=s)))
}

#[cfg(test)]
pub(crate) mod testutil;
