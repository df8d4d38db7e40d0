use crate::error::{Error, Result};
use crate::nn::{Conv2d, Conv3d, Dense, ForwardCache, LocallyConnected2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::Variant;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv3d(Conv3d<T>),
    Conv2d(Conv2d<T>),
    Local(LocallyConnected2d<T>),
    Dense(Dense<T>),
    /// Pure shape change; the target shape is stored.
    Reshape(Vec<usize>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv3d(_) => "conv3d",
            Layer::Conv2d(_) => "conv2d",
            Layer::Local(_) => "lc2d",
            Layer::Dense(_) => "dense",
            Layer::Reshape(_) => "reshape",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv3d(l) => l.output_shape(input),
            Layer::Conv2d(l) => l.output_shape(input),
            Layer::Local(l) => l.output_shape(input),
            Layer::Dense(l) => l.output_shape(input),
            Layer::Reshape(to) => {
                let (a, b) = (input.iter().product::<usize>(), to.iter().product::<usize>());
                if a != b {
                    return Err(Error::mismatch(to, input));
                }
                Ok(to.clone())
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv3d(l) => vec![&l.weights, &l.bias],
            Layer::Conv2d(l) => vec![&l.weights, &l.bias],
            Layer::Local(l) => vec![&l.weights, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Reshape(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv3d(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Local(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Reshape(_) => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn forward(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv3d(l) => l.forward(&x),
            Layer::Conv2d(l) => l.forward(&x),
            Layer::Local(l) => l.forward(&x),
            Layer::Dense(l) => l.forward(&x),
            Layer::Reshape(to) => x.reshape(to),
        }
    }

    fn forward_train(&self, x: Tensor<T>) -> Result<TapeEntry<T>> {
        Ok(match self {
            Layer::Conv3d(l) => TapeEntry::Cache(l.forward_train(&x)?),
            Layer::Conv2d(l) => TapeEntry::Cache(l.forward_train(&x)?),
            Layer::Local(l) => TapeEntry::Cache(l.forward_train(&x)?),
            Layer::Dense(l) => TapeEntry::Cache(l.forward_train(&x)?),
            Layer::Reshape(to) => {
                let from = x.shape().to_vec();
                TapeEntry::Reshape {
                    from,
                    output: x.reshape(to)?,
                }
            }
        })
    }
}

#[derive(Debug, Clone)]
enum TapeEntry<T> {
    Cache(ForwardCache<T>),
    Reshape { from: Vec<usize>, output: Tensor<T> },
}

impl<T: Scalar> TapeEntry<T> {
    fn output(&self) -> &Tensor<T> {
        match self {
            TapeEntry::Cache(c) => c.output(),
            TapeEntry::Reshape { output, .. } => output,
        }
    }
}

/// Per-layer forward record of one sample, consumed by
/// [`ModelGraph::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    entries: Vec<TapeEntry<T>>,
    prediction: Tensor<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn prediction(&self) -> &Tensor<T> {
        &self.prediction
    }

    /// An empty tape, as if no forward pass had been recorded.
    pub fn empty(prediction: Tensor<T>) -> Self {
        Self {
            entries: Vec::new(),
            prediction,
        }
    }
}

/// Parameter gradients, one tensor per parameter tensor in
/// [`ModelGraph::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &ModelGraph<T>) -> Result<Self> {
        Ok(Self {
            tensors: model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect::<Result<_>>()?,
        })
    }

    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::State("gradient sets of different models".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.accumulate(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_finite())
    }
}

/// An ordered stack of layers mapping an `[I, J, T_d]` input volume to an
/// `[I, J]` demand matrix.
///
/// Inputs are divided by `scale` before the first layer and outputs
/// multiplied by it after the last, so layers work on unit-order values while
/// the model speaks raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T> {
    pub variant: Variant,
    pub layers: Vec<Layer<T>>,
    pub input_spec: [usize; 3],
    pub output_spec: [usize; 2],
    pub scale: T,
}

impl<T: Scalar> ModelGraph<T> {
    /// Assembles a graph, checking that shapes chain from `input_spec` to
    /// `output_spec`.
    pub fn new(
        variant: Variant,
        layers: Vec<Layer<T>>,
        input_spec: [usize; 3],
        output_spec: [usize; 2],
    ) -> Result<Self> {
        let graph = Self {
            variant,
            layers,
            input_spec,
            output_spec,
            scale: T::one(),
        };
        let shapes = graph.shape_chain()?;
        let last = shapes.last().expect("chain includes the input");
        if last.as_slice() != output_spec {
            return Err(Error::mismatch(&output_spec, last));
        }
        Ok(graph)
    }

    /// Shapes after each layer, starting with the input shape.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_spec.to_vec()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    fn scaled_input(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.ensure_shape(&self.input_spec)?;
        if self.scale == T::one() {
            Ok(x.clone())
        } else {
            let inv = T::one() / self.scale;
            Ok(x.scale(inv))
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = self.scaled_input(x)?;
        for layer in &self.layers {
            h = layer.forward(h)?;
        }
        let h = h.reshape(&self.output_spec)?;
        Ok(if self.scale == T::one() { h } else { h.scale(self.scale) })
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<Tape<T>> {
        let mut h = self.scaled_input(x)?;
        let mut entries = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let entry = layer.forward_train(h)?;
            h = entry.output().clone();
            entries.push(entry);
        }
        let h = h.reshape(&self.output_spec)?;
        let prediction = if self.scale == T::one() { h } else { h.scale(self.scale) };
        Ok(Tape { entries, prediction })
    }

    /// Backpropagates `grad_prediction` (d loss / d prediction, shape
    /// `[I, J]`) through a recorded tape.
    pub fn backward(&self, tape: &Tape<T>, grad_prediction: &Tensor<T>) -> Result<Gradients<T>> {
        if tape.entries.len() != self.layers.len() {
            return Err(Error::State(format!(
                "tape records {} layers, model has {}; run forward_train first",
                tape.entries.len(),
                self.layers.len()
            )));
        }
        grad_prediction.ensure_shape(&self.output_spec)?;
        let last_shape = tape.entries.last().map(|e| e.output().shape().to_vec());
        let mut g = grad_prediction.scale(self.scale);
        if let Some(shape) = last_shape {
            g = g.reshape(&shape)?;
        }
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        for (layer, entry) in self.layers.iter().zip(&tape.entries).rev() {
            let (gin, params) = match (layer, entry) {
                (Layer::Conv3d(l), TapeEntry::Cache(c)) => {
                    let r = l.backward(c, &g)?;
                    (r.input, vec![r.weights, r.bias])
                }
                (Layer::Conv2d(l), TapeEntry::Cache(c)) => {
                    let r = l.backward(c, &g)?;
                    (r.input, vec![r.weights, r.bias])
                }
                (Layer::Local(l), TapeEntry::Cache(c)) => {
                    let r = l.backward(c, &g)?;
                    (r.input, vec![r.weights, r.bias])
                }
                (Layer::Dense(l), TapeEntry::Cache(c)) => {
                    let r = l.backward(c, &g)?;
                    (r.input, vec![r.weights, r.bias])
                }
                (Layer::Reshape(_), TapeEntry::Reshape { from, .. }) => (g.reshape(from)?, vec![]),
                (layer, _) => {
                    return Err(Error::State(format!(
                        "tape entry does not match {} layer",
                        layer.kind()
                    )))
                }
            };
            g = gin;
            per_layer.push(params);
        }
        per_layer.reverse();
        Ok(Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
        })
    }
}
