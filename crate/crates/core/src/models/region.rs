use std::ops::Range;

use crate::data::decompose;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ModelGraph;

/// Per-region additive predictor: a straight line through the fitted trend
/// plus the periodic profile at the target's phase.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    pub region: (usize, usize),
    pub period: usize,
    /// First interval of the training window.
    pub fit_start: usize,
    pub intercept: f64,
    pub slope: f64,
    /// Indexed by absolute phase `t % period`.
    pub periodic: Vec<f64>,
}

impl AdditiveModel {
    /// Fits on `series[window]`; time indices stay absolute.
    pub fn fit(region: (usize, usize), series: &[f64], window: Range<usize>, period: usize) -> Result<Self> {
        if window.end > series.len() || window.start >= window.end {
            return Err(Error::Range(format!(
                "training window {}..{} outside series of length {}",
                window.start,
                window.end,
                series.len()
            )));
        }
        let d = decompose(&series[window.clone()], period)?;
        let offset = window.start + d.start;

        // Least-squares line through the defined trend points.
        let n = d.trend.len() as f64;
        let mean_t = offset as f64 + (n - 1.0) / 2.0;
        let mean_y = d.trend.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (k, &y) in d.trend.iter().enumerate() {
            let dt = (offset + k) as f64 - mean_t;
            sxy += dt * (y - mean_y);
            sxx += dt * dt;
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let intercept = mean_y - slope * mean_t;

        let mut periodic = vec![0.0; period];
        for (local, &p) in d.periodic.iter().enumerate() {
            periodic[(window.start + local) % period] = p;
        }
        Ok(Self {
            region,
            period,
            fit_start: window.start,
            intercept,
            slope,
            periodic,
        })
    }

    pub fn predict(&self, t: usize) -> Result<f64> {
        if t < self.fit_start {
            return Err(Error::Range(format!(
                "t={t} precedes the training window starting at {}",
                self.fit_start
            )));
        }
        Ok(self.intercept + self.slope * t as f64 + self.periodic[t % self.period])
    }
}

/// Classical per-region baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionModel<T> {
    /// Small MLP on the region's own `[1, 1, T_d]` volume.
    Ann {
        region: (usize, usize),
        model: ModelGraph<T>,
    },
    Additive(AdditiveModel),
}

impl<T: Scalar> RegionModel<T> {
    pub fn region(&self) -> (usize, usize) {
        match self {
            RegionModel::Ann { region, .. } => *region,
            RegionModel::Additive(m) => m.region,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::TAU;

    #[test]
    fn pure_periodic_series() {
        let profile = [3.0, 7.0, 1.0, 0.0, 5.0, 9.0];
        let s: Vec<f64> = (0..60).map(|t| profile[t % 6]).collect();
        let m = AdditiveModel::fit((0, 0), &s, 0..48, 6).unwrap();
        for t in 48..60 {
            assert!((m.predict(t).unwrap() - profile[t % 6]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_series() {
        let s = vec![4.5; 100];
        let m = AdditiveModel::fit((1, 2), &s, 10..80, 7).unwrap();
        for t in 80..100 {
            assert!((m.predict(t).unwrap() - 4.5).abs() < 1e-12);
        }
    }

    #[test]
    fn before_window_is_range_error() {
        let s = vec![1.0; 50];
        let m = AdditiveModel::fit((0, 0), &s, 10..40, 5).unwrap();
        assert!(matches!(m.predict(9), Err(Error::Range(_))));
    }

    #[test]
    fn linear_plus_periodic_within_noise_floor() {
        let truth = |t: usize| 20.0 + 0.05 * t as f64 + 6.0 * (TAU * t as f64 / 24.0).sin();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let s: Vec<f64> = (0..24 * 30).map(|t| truth(t) + noise.sample(&mut rng)).collect();
        let m = AdditiveModel::fit((0, 0), &s, 0..24 * 21, 24).unwrap();
        let rmse = ((24 * 21..24 * 30)
            .map(|t| (m.predict(t).unwrap() - truth(t)).powi(2))
            .sum::<f64>()
            / (24.0 * 9.0))
            .sqrt();
        // Estimation error stays well under the 0.5 noise level.
        assert!(rmse < 0.25, "rmse {rmse}");
    }
}
