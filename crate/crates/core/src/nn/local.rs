use rand::Rng;

use super::{uniform_init, Activation, ForwardCache, LayerGrads, SPATIAL_KERNEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const K: usize = SPATIAL_KERNEL;

/// Locally connected 3×3 convolution: same windowing as [`super::Conv2d`] but
/// every output cell `(i, j)` owns its filter bank `weights[i, j, ..]` and bias
/// `bias[i, j, ..]`.
///
/// Weights `[I, J, 3, 3, in_ch, out_ch]`, bias `[I, J, out_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocallyConnected2d<T> {
    pub rows: usize,
    pub cols: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> LocallyConnected2d<T> {
    pub fn zeros(
        rows: usize,
        cols: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Result<Self> {
        Ok(Self {
            rows,
            cols,
            in_channels,
            out_channels,
            weights: Tensor::zeros(&[rows, cols, K, K, in_channels, out_channels])?,
            bias: Tensor::zeros(&[rows, cols, out_channels])?,
            activation,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(rows, cols, in_channels, out_channels, activation)?;
        layer.weights = uniform_init(layer.weights.shape(), K * K * in_channels, rng)?;
        Ok(layer)
    }

    /// Copies one shared kernel `[3, 3, in_ch, out_ch]` and bias `[out_ch]`
    /// into every location.
    pub fn from_shared(
        rows: usize,
        cols: usize,
        kernel: &Tensor<T>,
        bias: &Tensor<T>,
        activation: Activation,
    ) -> Result<Self> {
        let &[_, _, in_channels, out_channels] = kernel.shape() else {
            return Err(Error::mismatch(&[K, K, 0, 0], kernel.shape()));
        };
        kernel.ensure_shape(&[K, K, in_channels, out_channels])?;
        bias.ensure_shape(&[out_channels])?;
        let cells = rows * cols;
        let weights = kernel.data().repeat(cells);
        let b = bias.data().repeat(cells);
        Ok(Self {
            rows,
            cols,
            in_channels,
            out_channels,
            weights: Tensor::from_vec(&[rows, cols, K, K, in_channels, out_channels], weights)?,
            bias: Tensor::from_vec(&[rows, cols, out_channels], b)?,
            activation,
        })
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let expected = [self.rows, self.cols, self.in_channels];
        if shape != expected {
            return Err(Error::mismatch(&expected, shape));
        }
        Ok(())
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.check_input(input_shape)?;
        Ok(vec![self.rows, self.cols, self.out_channels])
    }

    #[inline]
    fn block(&self, i: usize, j: usize, di: usize, dj: usize) -> usize {
        (((i * self.cols + j) * K + di) * K + dj) * self.in_channels * self.out_channels
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (rows, cols, cin) = (self.rows, self.cols, self.in_channels);
        for i in 0..rows {
            for j in 0..cols {
                let cell = i * cols + j;
                for di in 0..K {
                    let Some(ii) = (i + di).checked_sub(1).filter(|&r| r < rows) else {
                        continue;
                    };
                    for dj in 0..K {
                        let Some(jj) = (j + dj).checked_sub(1).filter(|&c| c < cols) else {
                            continue;
                        };
                        f(cell, cell * self.out_channels, (ii * cols + jj) * cin, self.block(i, j, di, dj));
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.output)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.check_input(x.shape())?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let xd = x.data();
        let w = self.weights.data();
        let mut out = self.bias.data().to_vec();
        self.for_each_tap(|_, yo, xo, wo| {
            let acc = &mut out[yo..yo + cout];
            for ci in 0..cin {
                let xv = xd[xo + ci];
                let wrow = &w[wo + ci * cout..wo + (ci + 1) * cout];
                for (a, &wv) in acc.iter_mut().zip(wrow) {
                    *a += xv * wv;
                }
            }
        });
        for v in &mut out {
            *v = self.activation.apply(*v);
        }
        Ok(ForwardCache {
            input: x.clone(),
            output: Tensor::from_vec(&[self.rows, self.cols, cout], out)?,
        })
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        let in_shape = [self.rows, self.cols, self.in_channels];
        let out_shape = [self.rows, self.cols, self.out_channels];
        cache.check(&in_shape, &out_shape)?;
        grad_out.ensure_shape(&out_shape)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let grad_pre = self.activation.gate(&cache.output, grad_out);
        let xd = cache.input.data();
        let w = self.weights.data();
        let mut gx = vec![T::zero(); xd.len()];
        let mut gw = vec![T::zero(); w.len()];
        self.for_each_tap(|_, yo, xo, wo| {
            let gy = &grad_pre[yo..yo + cout];
            for ci in 0..cin {
                let xv = xd[xo + ci];
                let base = wo + ci * cout;
                let mut dx = T::zero();
                for co in 0..cout {
                    gw[base + co] += xv * gy[co];
                    dx += w[base + co] * gy[co];
                }
                gx[xo + ci] += dx;
            }
        });
        Ok(LayerGrads {
            input: Tensor::from_vec(&in_shape, gx)?,
            weights: Tensor::from_vec(self.weights.shape(), gw)?,
            bias: Tensor::from_vec(self.bias.shape(), grad_pre)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{check_layer_gradients, random_tensor};
    use crate::nn::Conv2d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lc_oracle(x: &Tensor<f64>, l: &LocallyConnected2d<f64>) -> Tensor<f64> {
        let mut out = Tensor::zeros(&[l.rows, l.cols, l.out_channels]).unwrap();
        for i in 0..l.rows as isize {
            for j in 0..l.cols as isize {
                for o in 0..l.out_channels {
                    let (iu, ju) = (i as usize, j as usize);
                    let mut acc = l.bias.get(&[iu, ju, o]);
                    for di in 0..3isize {
                        for dj in 0..3isize {
                            let (ii, jj) = (i + di - 1, j + dj - 1);
                            if ii < 0 || jj < 0 || ii >= l.rows as isize || jj >= l.cols as isize {
                                continue;
                            }
                            for c in 0..l.in_channels {
                                acc += x.get(&[ii as usize, jj as usize, c])
                                    * l.weights.get(&[iu, ju, di as usize, dj as usize, c, o]);
                            }
                        }
                    }
                    out.set(&[iu, ju, o], if l.activation == Activation::Relu { acc.max(0.0) } else { acc });
                }
            }
        }
        out
    }

    #[test]
    fn parameter_count_has_no_sharing() {
        let l = LocallyConnected2d::<f64>::zeros(16, 16, 32, 16, Activation::Relu).unwrap();
        assert_eq!(l.param_count(), 16 * 16 * 9 * 32 * 16 + 16 * 16 * 16);
    }

    #[test]
    fn shared_weights_match_conv2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Relu, Activation::Linear] {
            let mut conv = Conv2d::init(3, 4, act, &mut rng).unwrap();
            conv.bias = random_tensor(&[4], &mut rng);
            let lc = LocallyConnected2d::from_shared(5, 6, &conv.weights, &conv.bias, act).unwrap();
            let x = random_tensor(&[5, 6, 3], &mut rng);
            let d = lc.forward(&x).unwrap().max_abs_diff(&conv.forward(&x).unwrap()).unwrap();
            assert!(d <= 1e-12, "{d}");
        }
    }

    #[test]
    fn single_location_weights_are_local() {
        let mut l = LocallyConnected2d::<f64>::zeros(4, 4, 1, 1, Activation::Linear).unwrap();
        for di in 0..3 {
            for dj in 0..3 {
                l.weights.set(&[0, 0, di, dj, 0, 0], 1.0);
            }
        }
        let y = l.forward(&Tensor::filled(&[4, 4, 1], 1.0).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v = y.get(&[i, j, 0]);
                if (i, j) == (0, 0) {
                    assert_eq!(v, 4.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn matches_per_location_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut l = LocallyConnected2d::init(4, 3, 2, 3, Activation::Relu, &mut rng).unwrap();
        l.bias = random_tensor(&[4, 3, 3], &mut rng);
        let x = random_tensor(&[4, 3, 2], &mut rng);
        assert!(l.forward(&x).unwrap().max_abs_diff(&lc_oracle(&x, &l)).unwrap() < 1e-12);
    }

    #[test]
    fn wrong_input_shape() {
        let l = LocallyConnected2d::<f64>::zeros(4, 4, 2, 1, Activation::Relu).unwrap();
        let x = Tensor::zeros(&[4, 5, 2]).unwrap();
        assert!(matches!(l.forward(&x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn gradient_locality() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = LocallyConnected2d::init(5, 5, 2, 2, Activation::Linear, &mut rng).unwrap();
        let x = random_tensor(&[5, 5, 2], &mut rng);
        let cache = l.forward_train(&x).unwrap();
        let mut up = Tensor::zeros(&[5, 5, 2]).unwrap();
        up.set(&[2, 3, 0], 1.0);
        up.set(&[2, 3, 1], -0.5);
        let g = l.backward(&cache, &up).unwrap();
        let block = 9 * 2 * 2;
        for (cell, chunk) in g.weights.data().chunks(block).enumerate() {
            let nonzero = chunk.iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, cell == 2 * 5 + 3, "cell {cell}");
        }
    }

    #[test]
    fn lc2d_gradients_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let mut l = LocallyConnected2d::init(4, 4, 2, 2, Activation::Relu, &mut rng).unwrap();
            l.bias = random_tensor(&[4, 4, 2], &mut rng);
            let x = random_tensor(&[4, 4, 2], &mut rng);
            let err = check_layer_gradients(
                &x,
                &mut l,
                |l, x| l.forward(x).unwrap(),
                |l, c, g| l.backward(c, g).unwrap(),
                |l, x| l.forward_train(x).unwrap(),
                |l| vec![&mut l.weights, &mut l.bias],
                &mut rng,
            );
            assert!(err <= 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn summed_blocks_equal_shared_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut conv = Conv2d::init(2, 3, Activation::Relu, &mut rng).unwrap();
        conv.bias = random_tensor(&[3], &mut rng);
        let lc = LocallyConnected2d::from_shared(4, 5, &conv.weights, &conv.bias, Activation::Relu).unwrap();
        let x = random_tensor(&[4, 5, 2], &mut rng);
        let up = random_tensor(&[4, 5, 3], &mut rng);
        let gc = conv.backward(&conv.forward_train(&x).unwrap(), &up).unwrap();
        let gl = lc.backward(&lc.forward_train(&x).unwrap(), &up).unwrap();

        let block = gc.weights.len();
        let mut summed = vec![0.0; block];
        for chunk in gl.weights.data().chunks(block) {
            summed.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
        }
        for (a, b) in summed.iter().zip(gc.weights.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
        let mut bias = [0.0; 3];
        for chunk in gl.bias.data().chunks(3) {
            bias.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
        }
        for (a, b) in bias.iter().zip(gc.bias.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!(gl.input.max_abs_diff(&gc.input).unwrap() <= 1e-12);
    }
}
