//! Minibatch training with Adagrad on the mean squared error.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::VolumeSample;
use crate::error::{Error, Result};
use crate::models::{Gradients, Layer, ModelGraph};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of samples, taken from the end of the time-ordered list, held
    /// out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
    /// Replace every locally connected layer's gradient by its per-location
    /// average, broadcast back to all locations.
    pub share_local: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.01,
            adagrad_epsilon: 1e-8,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
            share_local: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        // Zero is allowed so that a run can be replayed without moving.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.adagrad_epsilon >= 0.0) {
            return Err(Error::Config("adagrad_epsilon must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation samples were held out.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub stopped_epoch: usize,
    /// Epoch whose parameters were restored.
    pub best_epoch: usize,
    pub checksum: u64,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss` lines followed by `#`-prefixed summary lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:e}"));
            writeln!(s, "{},{:e},{}", e.epoch, e.train_loss, val).unwrap();
        }
        writeln!(s, "# stopped_epoch={}", self.stopped_epoch).unwrap();
        writeln!(s, "# best_epoch={}", self.best_epoch).unwrap();
        writeln!(s, "# checksum={:016x}", self.checksum).unwrap();
        s
    }
}

/// Mean over cells of the squared error.
pub fn loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    let d = pred.sub(target)?;
    Ok(d.data().iter().map(|&v| v * v).sum::<T>() / T::of(d.len() as f64))
}

fn loss_grad<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    let two_over_n = T::of(2.0 / pred.len() as f64);
    Ok(pred.sub(target)?.scale(two_over_n))
}

/// Squared-gradient accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState<T> {
    pub accumulators: Vec<Tensor<T>>,
}

impl<T: Scalar> AdagradState<T> {
    pub fn new(model: &ModelGraph<T>) -> Result<Self> {
        Ok(Self {
            accumulators: Gradients::zeros_like(model)?.tensors,
        })
    }
}

/// `acc += g²; p -= lr · g / (sqrt(acc) + eps)` elementwise.
pub fn adagrad_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdagradState<T>,
    lr: T,
    eps: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.accumulators.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.len()],
            actual: vec![grads.len(), state.accumulators.len()],
        });
    }
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut state.accumulators) {
        g.ensure_shape(p.shape())?;
        acc.ensure_shape(p.shape())?;
        for ((p, &g), a) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *a += g * g;
            *p -= lr * g / (a.sqrt() + eps);
        }
    }
    Ok(())
}

/// Mean loss and mean parameter gradient over `batch`.
///
/// Per-sample passes run in parallel; results are reduced in sample order so
/// the sums do not depend on the thread count.
pub fn batch_gradients<T: Scalar>(
    model: &ModelGraph<T>,
    batch: &[&VolumeSample<T>],
) -> Result<(T, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::Range("empty batch".into()));
    }
    let per_sample: Vec<(T, Gradients<T>)> = batch
        .par_iter()
        .map(|s| {
            let tape = model.forward_train(&s.input)?;
            let l = loss(tape.prediction(), &s.target)?;
            let g = model.backward(&tape, &loss_grad(tape.prediction(), &s.target)?)?;
            Ok((l, g))
        })
        .collect::<Result<_>>()?;
    let mut total = T::zero();
    let mut grads = Gradients::zeros_like(model)?;
    for (l, g) in &per_sample {
        total += *l;
        grads.accumulate(g)?;
    }
    let inv = T::one() / T::of(batch.len() as f64);
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Mean loss of `model` over `samples`, reduced in sample order.
pub fn evaluate_loss<T: Scalar>(model: &ModelGraph<T>, samples: &[VolumeSample<T>]) -> Result<T> {
    let losses: Vec<T> = samples
        .par_iter()
        .map(|s| loss(&model.forward(&s.input)?, &s.target))
        .collect::<Result<_>>()?;
    Ok(losses.into_iter().sum::<T>() / T::of(samples.len() as f64))
}

/// Averages each locally connected layer's gradient over locations and
/// writes the average back to every location.
pub fn share_local_gradients<T: Scalar>(model: &ModelGraph<T>, grads: &mut Gradients<T>) {
    let mut k = 0;
    for layer in &model.layers {
        let n = layer.params().len();
        if let Layer::Local(l) = layer {
            let cells = l.rows * l.cols;
            for g in &mut grads.tensors[k..k + n] {
                let block = g.len() / cells;
                let mut mean = vec![T::zero(); block];
                for chunk in g.data().chunks_exact(block) {
                    mean.iter_mut().zip(chunk).for_each(|(m, &v)| *m += v);
                }
                let inv = T::one() / T::of(cells as f64);
                mean.iter_mut().for_each(|m| *m *= inv);
                for chunk in g.data_mut().chunks_exact_mut(block) {
                    chunk.copy_from_slice(&mean);
                }
            }
        }
        k += n;
    }
}

/// FNV-1a over the little-endian bytes of every parameter.
pub fn param_checksum<T: Scalar>(model: &ModelGraph<T>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in model.params() {
        for &v in p.data() {
            for b in v.f64().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn snapshot<T: Scalar>(model: &ModelGraph<T>) -> Vec<Tensor<T>> {
    model.params().into_iter().cloned().collect()
}

fn restore<T: Scalar>(model: &mut ModelGraph<T>, saved: &[Tensor<T>]) {
    for (p, s) in model.params_mut().into_iter().zip(saved) {
        p.data_mut().copy_from_slice(s.data());
    }
}

/// Trains `model` in place on time-ordered `samples` and restores the
/// parameters of the best epoch.
pub fn train<T: Scalar>(
    model: &mut ModelGraph<T>,
    samples: &[VolumeSample<T>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Range("no training samples".into()));
    }
    for s in samples {
        s.input.ensure_shape(&model.input_spec)?;
        s.target.ensure_shape(&model.output_spec)?;
    }
    let n_val = ((samples.len() as f64 * cfg.validation_fraction).round() as usize).min(samples.len() - 1);
    let (fit, val) = samples.split_at(samples.len() - n_val);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdagradState::new(model)?;
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.adagrad_epsilon));
    let mut order: Vec<usize> = (0..fit.len()).collect();

    let mut epochs = Vec::new();
    let mut best = (f64::INFINITY, 0usize, snapshot(model));
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&VolumeSample<T>> = idx.iter().map(|&i| &fit[i]).collect();
            let (l, mut grads) = batch_gradients(model, &batch)?;
            let l = l.f64();
            if !l.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: l,
                });
            }
            if cfg.share_local {
                share_local_gradients(model, &mut grads);
            }
            adagrad_step(&mut model.params_mut(), &grads.tensors, &mut state, lr, eps)?;
            sum += l * batch.len() as f64;
        }
        let train_loss = sum / fit.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(evaluate_loss(model, val)?.f64())
        };
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: monitored,
            });
        }
        epochs.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        if monitored < best.0 {
            best = (monitored, epoch, snapshot(model));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let stopped_epoch = epochs.len();
    if best.1 > 0 {
        restore(model, &best.2);
    }
    Ok(TrainReport {
        epochs,
        stopped_epoch,
        best_epoch: best.1,
        checksum: param_checksum(model),
    })
}
