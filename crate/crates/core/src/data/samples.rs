use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::DemandCube;

/// One training instance: the stacked input volume and the demand matrix to
/// predict.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSample<T> {
    pub t: usize,
    /// `[I, J, recent + period]`, depth order
    /// `X_{t-1} .. X_{t-recent}, X_{t-L-1} .. X_{t-L-period}`.
    pub input: Tensor<T>,
    /// `[I, J]`
    pub target: Tensor<T>,
}

impl<T: Scalar> VolumeSample<T> {
    /// The `[1, 1, T_d]` input and `[1, 1]` target of a single region.
    pub fn region(&self, i: usize, j: usize) -> VolumeSample<T> {
        let s = self.input.shape();
        let (cols, depth) = (s[1], s[2]);
        let off = (i * cols + j) * depth;
        VolumeSample {
            t: self.t,
            input: Tensor::from_vec(&[1, 1, depth], self.input.data()[off..off + depth].to_vec())
                .expect("depth >= 1"),
            target: Tensor::from_vec(&[1, 1], vec![self.target.get(&[i, j])]).expect("1x1"),
        }
    }
}

/// Time indices that make up the input volume for target `t`.
pub fn input_indices(t: usize, recent: usize, period: usize, lag: usize) -> Option<Vec<usize>> {
    let mut idx = Vec::with_capacity(recent + period);
    for k in 1..=recent {
        idx.push(t.checked_sub(k)?);
    }
    for k in 1..=period {
        idx.push(t.checked_sub(lag + k)?);
    }
    Some(idx)
}

/// First target index whose full input volume lies at or after index 0.
pub fn earliest_target(recent: usize, period: usize, lag: usize) -> usize {
    (lag + period).max(recent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    pub samples: Vec<VolumeSample<T>>,
    /// Targets in the range dropped for lack of history.
    pub skipped: usize,
}

/// Builds volume samples from any `[I, J, T]` series tensor.
pub fn make_samples_from<T: Scalar>(
    values: &Tensor<f64>,
    recent: usize,
    period: usize,
    lag: usize,
    range: Range<usize>,
) -> Result<SampleSet<T>> {
    if recent == 0 || period == 0 {
        return Err(Error::Config(format!(
            "recent ({recent}) and period ({period}) lengths must be >= 1"
        )));
    }
    let s = values.shape();
    if s.len() != 3 {
        return Err(Error::mismatch(&[0, 0, 0], s));
    }
    let (rows, cols, n) = (s[0], s[1], s[2]);
    if range.end > n || range.start > range.end {
        return Err(Error::Range(format!(
            "target range {}..{} outside [0, {n})",
            range.start, range.end
        )));
    }
    let first = earliest_target(recent, period, lag).max(range.start);
    let skipped = first.min(range.end) - range.start;
    let depth = recent + period;
    let data = values.data();
    let samples = (first..range.end)
        .map(|t| {
            let idx = input_indices(t, recent, period, lag).expect("t >= earliest target");
            let mut input = Vec::with_capacity(rows * cols * depth);
            let mut target = Vec::with_capacity(rows * cols);
            for cell in 0..rows * cols {
                let series = &data[cell * n..(cell + 1) * n];
                input.extend(idx.iter().map(|&k| T::of(series[k])));
                target.push(T::of(series[t]));
            }
            Ok(VolumeSample {
                t,
                input: Tensor::from_vec(&[rows, cols, depth], input)?,
                target: Tensor::from_vec(&[rows, cols], target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet { samples, skipped })
}

pub fn make_samples<T: Scalar>(
    cube: &DemandCube,
    recent: usize,
    period: usize,
    lag: usize,
    range: Range<usize>,
) -> Result<SampleSet<T>> {
    make_samples_from(&cube.counts, recent, period, lag, range)
}

/// Contiguous train and test interval ranges covering `train_days` then
/// `test_days` whole days from the start of the cube.
pub fn split(cube: &DemandCube, train_days: usize, test_days: usize) -> Result<(Range<usize>, Range<usize>)> {
    if train_days == 0 || test_days == 0 {
        return Err(Error::Config("train and test spans must each be >= 1 day".into()));
    }
    let dt = cube.grid.dt;
    if dt <= 0 || 86_400 % dt != 0 {
        return Err(Error::Config(format!("interval length {dt}s does not divide a day")));
    }
    let per_day = (86_400 / dt) as usize;
    let train_end = train_days * per_day;
    let test_end = train_end + test_days * per_day;
    if test_end > cube.intervals() {
        return Err(Error::Config(format!(
            "{train_days}+{test_days} days need {test_end} intervals, cube has {}",
            cube.intervals()
        )));
    }
    Ok((0..train_end, train_end..test_end))
}
