//! Seeded synthetic demand with spatially heterogeneous statistics.
//!
//! Each region draws its demand around a rate
//!
//! ```text
//! λ_ij(t) = w(t) · d(t) · base_ij · (1 + amp_ij · s_ij(t mod L)) + trend · t
//! ```
//!
//! where `base_ij` falls off radially from a city centre, `amp_ij` and the
//! shape `s_ij` (a blend of a morning and an evening peak) vary across the
//! grid, `d(t)` is a slow drift, and `w(t)` an optional weekend factor. A
//! chosen fraction of regions is instead white noise around a small constant
//! rate.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{DemandCube, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Poisson,
    /// Rounded Gaussian with the given standard deviation.
    Gaussian(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    /// Intervals per daily cycle.
    pub period: usize,
    pub days: usize,
    pub dt: i64,
    pub t0: i64,
    /// Base rate at the busiest cell.
    pub peak_rate: f64,
    /// Base rate far from the centre.
    pub floor_rate: f64,
    /// Largest relative seasonal amplitude; cells get between half and all of it.
    pub seasonal_amplitude: f64,
    /// Fraction of regions replaced by white noise.
    pub noise_fraction: f64,
    pub noise_rate: f64,
    /// Additive rate growth per interval.
    pub trend: f64,
    /// Relative amplitude and period (intervals) of a slow sinusoidal drift.
    pub drift_amplitude: f64,
    pub drift_period: f64,
    /// Multiplier on days 5 and 6 of each week; 1 disables the weekly cycle.
    pub weekend_factor: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            period: 144,
            days: 30,
            dt: 600,
            t0: 1_475_251_200,
            peak_rate: 40.0,
            floor_rate: 0.5,
            seasonal_amplitude: 0.8,
            noise_fraction: 0.0,
            noise_rate: 1.0,
            trend: 0.0,
            drift_amplitude: 0.05,
            drift_period: 600.0,
            weekend_factor: 1.0,
            noise: NoiseKind::Poisson,
            seed: 0,
        }
    }
}

/// Per-region parameters drawn for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProfile {
    pub base: f64,
    pub amplitude: f64,
    /// Weight of the morning peak; the evening peak gets `1 - mix`.
    pub mix: f64,
    pub white_noise: bool,
}

impl SynthConfig {
    pub fn intervals(&self) -> usize {
        self.period * self.days
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            lon_min: 103.85,
            lon_max: 104.30,
            lat_min: 30.48,
            lat_max: 30.87,
            rows: self.rows,
            cols: self.cols,
            t0: self.t0,
            dt: self.dt,
            intervals: self.intervals(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.period == 0 || self.days == 0 {
            return Err(Error::Config("synthetic grid, period and days must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::Config("noise_fraction must lie in [0, 1]".into()));
        }
        if self.peak_rate < 0.0 || self.floor_rate < 0.0 || self.noise_rate < 0.0 {
            return Err(Error::Config("rates must be >= 0".into()));
        }
        if self.drift_period <= 0.0 {
            return Err(Error::Config("drift_period must be > 0".into()));
        }
        Ok(())
    }

    pub fn profiles<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<RegionProfile> {
        let (rows, cols) = (self.rows as f64, self.cols as f64);
        // Off-centre hot spot so the pattern is not symmetric.
        let (ci, cj) = (0.45 * (rows - 1.0), 0.55 * (cols - 1.0));
        let sigma = 0.25 * rows.max(cols);
        let mut profiles: Vec<RegionProfile> = (0..self.rows * self.cols)
            .map(|cell| {
                let (i, j) = ((cell / self.cols) as f64, (cell % self.cols) as f64);
                let d2 = (i - ci).powi(2) + (j - cj).powi(2);
                let radial = (-d2 / (2.0 * sigma * sigma)).exp();
                let jitter = rng.random_range(0.8..1.2);
                RegionProfile {
                    base: self.floor_rate + (self.peak_rate - self.floor_rate) * radial * jitter,
                    amplitude: self.seasonal_amplitude * rng.random_range(0.5..1.0),
                    mix: (j / (cols - 1.0).max(1.0) + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0),
                    white_noise: false,
                }
            })
            .collect();
        let n_noise = (self.noise_fraction * profiles.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..profiles.len()).collect();
        order.shuffle(rng);
        for &cell in &order[..n_noise] {
            profiles[cell].white_noise = true;
        }
        profiles
    }

    /// Rate of one region at interval `t`.
    pub fn rate(&self, p: &RegionProfile, t: usize) -> f64 {
        if p.white_noise {
            return self.noise_rate;
        }
        let phase = (t % self.period) as f64 / self.period as f64;
        let morning = (TAU * (phase - 0.33)).cos();
        let evening = (TAU * (phase - 0.75)).cos();
        let shape = p.mix * morning + (1.0 - p.mix) * evening;
        let drift = 1.0 + self.drift_amplitude * (TAU * t as f64 / self.drift_period).sin();
        let day = t / self.period;
        let week = if day % 7 >= 5 { self.weekend_factor } else { 1.0 };
        (week * drift * p.base * (1.0 + p.amplitude * shape) + self.trend * t as f64).max(0.0)
    }
}

pub fn synthesize(cfg: &SynthConfig) -> Result<(DemandCube, Vec<RegionProfile>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles = cfg.profiles(&mut rng);
    let n = cfg.intervals();
    let mut counts = Vec::with_capacity(profiles.len() * n);
    for p in &profiles {
        for t in 0..n {
            let lambda = cfg.rate(p, t);
            let v = match cfg.noise {
                NoiseKind::Poisson if lambda > 0.0 => Poisson::new(lambda)
                    .map_err(|e| Error::Config(format!("poisson rate {lambda}: {e}")))?
                    .sample(&mut rng),
                NoiseKind::Poisson => 0.0,
                NoiseKind::Gaussian(sd) => {
                    let z: f64 = Normal::new(lambda, sd)
                        .map_err(|e| Error::Config(format!("gaussian sd {sd}: {e}")))?
                        .sample(&mut rng);
                    z.round()
                }
            };
            counts.push(v.max(0.0));
        }
    }
    let counts = Tensor::from_vec(&[cfg.rows, cfg.cols, n], counts)?;
    Ok((DemandCube::new(cfg.grid(), counts)?, profiles))
}
