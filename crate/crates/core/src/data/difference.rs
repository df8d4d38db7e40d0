use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::DemandCube;

/// Seasonal difference at lag `L` followed by a first difference:
///
/// `y_t = (x_t - x_{t-L}) - (x_{t-1} - x_{t-1-L})`, defined for `t >= L + 1`.
///
/// Entries before `L + 1` are zero. The original series is kept so that
/// predicted differences can be mapped back to demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Differenced {
    pub lag: usize,
    /// `[I, J, T]`, may be negative.
    pub values: Tensor<f64>,
    history: Tensor<f64>,
}

pub fn difference_transform(cube: &DemandCube, lag: usize) -> Result<Differenced> {
    difference_series(&cube.counts, lag)
}

pub fn difference_series(values: &Tensor<f64>, lag: usize) -> Result<Differenced> {
    let s = values.shape();
    let n = *s.last().ok_or_else(|| Error::mismatch(&[0, 0, 0], s))?;
    if lag == 0 || n <= lag + 1 {
        return Err(Error::Range(format!(
            "differencing at lag {lag} needs more than {} intervals, have {n}",
            lag + 1
        )));
    }
    let mut out = vec![0.0; values.len()];
    for (x, y) in values.data().chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        for t in lag + 1..n {
            y[t] = (x[t] - x[t - lag]) - (x[t - 1] - x[t - 1 - lag]);
        }
    }
    Ok(Differenced {
        lag,
        values: Tensor::from_vec(s, out)?,
        history: values.clone(),
    })
}

impl Differenced {
    /// First index with a defined difference.
    pub fn first_valid(&self) -> usize {
        self.lag + 1
    }

    /// Maps differenced values at `t` (shape `[I, J]`) back to demand using
    /// the stored history before `t`.
    pub fn invert_at(&self, t: usize, diff: &Tensor<f64>) -> Result<Tensor<f64>> {
        let s = self.history.shape();
        let n = s[s.len() - 1];
        let cells = self.history.len() / n;
        if t < self.first_valid() || t > n {
            return Err(Error::Range(format!(
                "cannot invert at t={t}: history covers [{}, {n}]",
                self.first_valid()
            )));
        }
        if diff.len() != cells {
            return Err(Error::mismatch(&s[..s.len() - 1], diff.shape()));
        }
        let lag = self.lag;
        let h = self.history.data();
        let out = (0..cells)
            .map(|c| {
                let x = &h[c * n..(c + 1) * n];
                diff.data()[c] + x[t - 1] + x[t - lag] - x[t - 1 - lag]
            })
            .collect();
        Tensor::from_vec(diff.shape(), out)
    }

    /// Rebuilds the full series from the differences and the first `lag + 1`
    /// original values of each cell.
    pub fn reconstruct(&self, seed: &Tensor<f64>) -> Result<Tensor<f64>> {
        let s = self.values.shape();
        let n = s[s.len() - 1];
        let head = self.lag + 1;
        let cells = self.values.len() / n;
        if seed.len() != cells * head {
            return Err(Error::Range(format!(
                "reconstruction needs {head} seed values per cell"
            )));
        }
        let lag = self.lag;
        let mut out = vec![0.0; self.values.len()];
        for c in 0..cells {
            let x = &mut out[c * n..(c + 1) * n];
            x[..head].copy_from_slice(&seed.data()[c * head..(c + 1) * head]);
            let y = &self.values.data()[c * n..(c + 1) * n];
            for t in head..n {
                x[t] = y[t] + x[t - 1] + x[t - lag] - x[t - 1 - lag];
            }
        }
        Tensor::from_vec(s, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: Vec<f64>) -> Tensor<f64> {
        let n = v.len();
        Tensor::from_vec(&[1, 1, n], v).unwrap()
    }

    #[test]
    fn periodic_series_differences_to_zero() {
        let x = series((0..100).map(|t| ((t % 12) as f64).powi(2)).collect());
        let d = difference_series(&x, 12).unwrap();
        assert!(d.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_differences_to_zero() {
        let x = series((0..60).map(|t| 2.0 + 0.5 * t as f64).collect());
        let d = difference_series(&x, 7).unwrap();
        assert!(d.values.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn insufficient_history() {
        let x = series(vec![1.0; 8]);
        assert!(matches!(difference_series(&x, 7), Err(Error::Range(_))));
    }

    #[test]
    fn one_step_inversion_recovers_truth() {
        let x = series((0..50).map(|t| ((t * 7919) % 13) as f64).collect());
        let d = difference_series(&x, 5).unwrap();
        for t in 6..50 {
            let y = Tensor::from_vec(&[1, 1], vec![d.values.get(&[0, 0, t])]).unwrap();
            let back = d.invert_at(t, &y).unwrap();
            assert!((back.data()[0] - x.get(&[0, 0, t])).abs() < 1e-12);
        }
        let y = Tensor::zeros(&[1, 1]).unwrap();
        assert!(matches!(d.invert_at(5, &y), Err(Error::Range(_))));
    }

    proptest! {
        #[test]
        fn round_trip(v in prop::collection::vec(0u16..500, 30..120), lag in 1usize..12) {
            // Demand is integer-valued, so the recurrence is exact in f64.
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let n = v.len();
            let x = Tensor::from_vec(&[1, 2, n / 2], v[..2 * (n / 2)].to_vec()).unwrap();
            prop_assume!(n / 2 > lag + 1);
            let d = difference_series(&x, lag).unwrap();
            let m = n / 2;
            let seed: Vec<f64> = (0..2)
                .flat_map(|c| x.data()[c * m..c * m + lag + 1].to_vec())
                .collect();
            let seed = Tensor::from_vec(&[2 * (lag + 1)], seed).unwrap();
            let back = d.reconstruct(&seed).unwrap();
            prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-12);
        }
    }
}
