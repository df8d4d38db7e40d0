use rand::Rng;

use super::{uniform_init, Activation, ForwardCache, LayerGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Spatial receptive field of every convolution, in cells.
pub const SPATIAL_KERNEL: usize = 3;

const K: usize = SPATIAL_KERNEL;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    rows: usize,
    cols: usize,
    depth_in: usize,
    depth_out: usize,
    kernel_depth: usize,
    in_ch: usize,
    out_ch: usize,
}

impl Geometry {
    #[inline]
    fn x_at(&self, i: usize, j: usize, t: usize) -> usize {
        ((i * self.cols + j) * self.depth_in + t) * self.in_ch
    }

    #[inline]
    fn y_at(&self, i: usize, j: usize, t: usize) -> usize {
        ((i * self.cols + j) * self.depth_out + t) * self.out_ch
    }

    #[inline]
    fn w_at(&self, di: usize, dj: usize, dt: usize) -> usize {
        ((di * K + dj) * self.kernel_depth + dt) * self.in_ch * self.out_ch
    }

    /// Visits every (output position, input window tap) pair that lies inside
    /// the zero-padded grid.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                for t in 0..self.depth_out {
                    let y = self.y_at(i, j, t);
                    for di in 0..K {
                        let Some(ii) = (i + di).checked_sub(1).filter(|&r| r < self.rows) else {
                            continue;
                        };
                        for dj in 0..K {
                            let Some(jj) = (j + dj).checked_sub(1).filter(|&c| c < self.cols)
                            else {
                                continue;
                            };
                            for dt in 0..self.kernel_depth {
                                f(y, self.x_at(ii, jj, t + dt), self.w_at(di, dj, dt));
                            }
                        }
                    }
                }
            }
        }
    }
}

fn forward_raw<T: Scalar>(g: &Geometry, x: &[T], w: &[T], b: &[T], act: Activation) -> Vec<T> {
    let (cin, cout) = (g.in_ch, g.out_ch);
    let mut out = vec![T::zero(); g.rows * g.cols * g.depth_out * cout];
    for chunk in out.chunks_exact_mut(cout) {
        chunk.copy_from_slice(b);
    }
    g.for_each_tap(|yo, xo, wo| {
        let acc = &mut out[yo..yo + cout];
        for ci in 0..cin {
            let xv = x[xo + ci];
            let wrow = &w[wo + ci * cout..wo + (ci + 1) * cout];
            for (a, &wv) in acc.iter_mut().zip(wrow) {
                *a += xv * wv;
            }
        }
    });
    for v in &mut out {
        *v = act.apply(*v);
    }
    out
}

fn backward_raw<T: Scalar>(g: &Geometry, x: &[T], w: &[T], grad_pre: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (cin, cout) = (g.in_ch, g.out_ch);
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); cout];
    for chunk in grad_pre.chunks_exact(cout) {
        for (a, &v) in gb.iter_mut().zip(chunk) {
            *a += v;
        }
    }
    g.for_each_tap(|yo, xo, wo| {
        let gy = &grad_pre[yo..yo + cout];
        for ci in 0..cin {
            let xv = x[xo + ci];
            let wrow = &w[wo + ci * cout..wo + (ci + 1) * cout];
            let gwrow = &mut gw[wo + ci * cout..wo + (ci + 1) * cout];
            let mut dx = T::zero();
            for ((gwv, &wv), &gv) in gwrow.iter_mut().zip(wrow).zip(gy) {
                *gwv += xv * gv;
                dx += wv * gv;
            }
            gx[xo + ci] += dx;
        }
    });
    (gx, gw, gb)
}

/// 3D convolution: 3×3 spatial kernel with zero "same" padding, valid
/// convolution along time, stride 1 everywhere.
///
/// Input `[I, J, T_in, in_ch]`, output `[I, J, T_in - k_d + 1, out_ch]`.
/// Weights are `[3, 3, k_d, in_ch, out_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    pub kernel_depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> Conv3d<T> {
    pub fn zeros(
        kernel_depth: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Result<Self> {
        Ok(Self {
            kernel_depth,
            in_channels,
            out_channels,
            weights: Tensor::zeros(&[K, K, kernel_depth, in_channels, out_channels])?,
            bias: Tensor::zeros(&[out_channels])?,
            activation,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        kernel_depth: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(kernel_depth, in_channels, out_channels, activation)?;
        layer.weights = uniform_init(
            layer.weights.shape(),
            K * K * kernel_depth * in_channels,
            rng,
        )?;
        Ok(layer)
    }

    pub fn output_depth(&self, input_depth: usize) -> Result<usize> {
        if self.kernel_depth == 0 || self.kernel_depth > input_depth {
            return Err(Error::Depth {
                kernel: self.kernel_depth,
                input: input_depth,
            });
        }
        Ok(input_depth - self.kernel_depth + 1)
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let g = self.geometry(input_shape)?;
        Ok(vec![g.rows, g.cols, g.depth_out, g.out_ch])
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let &[rows, cols, depth_in, in_ch] = shape else {
            return Err(Error::mismatch(&[0, 0, 0, self.in_channels], shape));
        };
        if in_ch != self.in_channels {
            return Err(Error::mismatch(&[rows, cols, depth_in, self.in_channels], shape));
        }
        Ok(Geometry {
            rows,
            cols,
            depth_in,
            depth_out: self.output_depth(depth_in)?,
            kernel_depth: self.kernel_depth,
            in_ch,
            out_ch: self.out_channels,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.output)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        let g = self.geometry(x.shape())?;
        let out = forward_raw(&g, x.data(), self.weights.data(), self.bias.data(), self.activation);
        Ok(ForwardCache {
            input: x.clone(),
            output: Tensor::from_vec(&[g.rows, g.cols, g.depth_out, g.out_ch], out)?,
        })
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        let g = self
            .geometry(cache.input.shape())
            .map_err(|e| Error::State(format!("forward cache unusable: {e}")))?;
        let out_shape = [g.rows, g.cols, g.depth_out, g.out_ch];
        cache.check(cache.input.shape(), &out_shape)?;
        grad_out.ensure_shape(&out_shape)?;
        let grad_pre = self.activation.gate(&cache.output, grad_out);
        let (gx, gw, gb) = backward_raw(&g, cache.input.data(), self.weights.data(), &grad_pre);
        Ok(LayerGrads {
            input: Tensor::from_vec(cache.input.shape(), gx)?,
            weights: Tensor::from_vec(self.weights.shape(), gw)?,
            bias: Tensor::from_vec(self.bias.shape(), gb)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// 2D convolution over `[I, J, in_ch]` with a shared 3×3 kernel
/// `[3, 3, in_ch, out_ch]`, zero "same" padding and stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, activation: Activation) -> Result<Self> {
        Ok(Self {
            in_channels,
            out_channels,
            weights: Tensor::zeros(&[K, K, in_channels, out_channels])?,
            bias: Tensor::zeros(&[out_channels])?,
            activation,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, activation)?;
        layer.weights = uniform_init(layer.weights.shape(), K * K * in_channels, rng)?;
        Ok(layer)
    }

    // A 2D convolution is the depth-1 case of the 3D one; the flat layouts of
    // [I, J, C] and [I, J, 1, C] coincide, as do the weight layouts.
    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let &[rows, cols, in_ch] = shape else {
            return Err(Error::mismatch(&[0, 0, self.in_channels], shape));
        };
        if in_ch != self.in_channels {
            return Err(Error::mismatch(&[rows, cols, self.in_channels], shape));
        }
        Ok(Geometry {
            rows,
            cols,
            depth_in: 1,
            depth_out: 1,
            kernel_depth: 1,
            in_ch,
            out_ch: self.out_channels,
        })
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let g = self.geometry(input_shape)?;
        Ok(vec![g.rows, g.cols, g.out_ch])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.output)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        let g = self.geometry(x.shape())?;
        let out = forward_raw(&g, x.data(), self.weights.data(), self.bias.data(), self.activation);
        Ok(ForwardCache {
            input: x.clone(),
            output: Tensor::from_vec(&[g.rows, g.cols, g.out_ch], out)?,
        })
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        let g = self
            .geometry(cache.input.shape())
            .map_err(|e| Error::State(format!("forward cache unusable: {e}")))?;
        let out_shape = [g.rows, g.cols, g.out_ch];
        cache.check(cache.input.shape(), &out_shape)?;
        grad_out.ensure_shape(&out_shape)?;
        let grad_pre = self.activation.gate(&cache.output, grad_out);
        let (gx, gw, gb) = backward_raw(&g, cache.input.data(), self.weights.data(), &grad_pre);
        Ok(LayerGrads {
            input: Tensor::from_vec(cache.input.shape(), gx)?,
            weights: Tensor::from_vec(self.weights.shape(), gw)?,
            bias: Tensor::from_vec(self.bias.shape(), gb)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}
