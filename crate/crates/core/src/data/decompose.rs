use crate::error::{Error, Result};

/// Additive split of a series into trend, per-phase periodic term and
/// residual for a candidate period.
///
/// The trend is a centred moving average of window `period` (a 2×`period`
/// average with half-weight endpoints when the period is even), so it is only
/// defined on `[start, start + trend.len())`; residuals cover the same range.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub period: usize,
    pub start: usize,
    pub trend: Vec<f64>,
    /// Indexed by absolute phase `t % period`; sums to zero.
    pub periodic: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_variance: f64,
}

impl Decomposition {
    pub fn end(&self) -> usize {
        self.start + self.trend.len()
    }

    /// `trend + periodic + residual` at absolute index `t`.
    pub fn reconstruct(&self, t: usize) -> Option<f64> {
        let k = t.checked_sub(self.start).filter(|&k| k < self.trend.len())?;
        Some(self.trend[k] + self.periodic[t % self.period] + self.residual[k])
    }
}

fn centred_average(series: &[f64], period: usize) -> (usize, Vec<f64>) {
    let half = period / 2;
    let n = series.len();
    let inv = 1.0 / period as f64;
    let trend = (half..n - half)
        .map(|t| {
            if period % 2 == 1 {
                series[t - half..=t + half].iter().sum::<f64>() * inv
            } else {
                let inner: f64 = series[t + 1 - half..t + half].iter().sum();
                (0.5 * series[t - half] + inner + 0.5 * series[t + half]) * inv
            }
        })
        .collect();
    (half, trend)
}

pub fn decompose(series: &[f64], period: usize) -> Result<Decomposition> {
    if period == 0 {
        return Err(Error::Config("period must be >= 1".into()));
    }
    if series.len() < 2 * period {
        return Err(Error::Range(format!(
            "series of length {} is shorter than two periods of {period}",
            series.len()
        )));
    }
    let (start, trend) = centred_average(series, period);

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (k, &tr) in trend.iter().enumerate() {
        let t = start + k;
        sums[t % period] += series[t] - tr;
        counts[t % period] += 1;
    }
    let mut periodic: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let centre = periodic.iter().sum::<f64>() / period as f64;
    periodic.iter_mut().for_each(|p| *p -= centre);

    let residual: Vec<f64> = trend
        .iter()
        .enumerate()
        .map(|(k, tr)| series[start + k] - tr - periodic[(start + k) % period])
        .collect();
    let residual_variance = residual_variance(&residual, period);
    Ok(Decomposition {
        period,
        start,
        trend,
        periodic,
        residual,
        residual_variance,
    })
}

/// Residual sum of squares over the degrees of freedom left after fitting
/// one mean per phase. Dividing by `n - 1` instead lets multiples of the true
/// period win by absorbing noise into their extra phase means.
fn residual_variance(r: &[f64], period: usize) -> f64 {
    let dof = r.len().saturating_sub(period).max(1);
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / dof as f64
}

#[cfg(test)]
fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64
}

/// Residual variance for every candidate, in candidate order.
pub fn period_scores(series: &[f64], candidates: &[usize]) -> Result<Vec<(usize, f64)>> {
    candidates
        .iter()
        .map(|&p| decompose(series, p).map(|d| (p, d.residual_variance)))
        .collect()
}

/// Candidate with the smallest residual variance; ties go to the smaller
/// period. Scores within `1e-9` of the series' own variance count as tied so
/// that rounding noise cannot pick a multiple of an exact period.
pub fn select_period(series: &[f64], candidates: &[usize]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate periods".into()));
    }
    let scores = period_scores(series, candidates)?;
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let spread = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / series.len() as f64;
    let tol = 1e-9 * spread;
    let mut best = scores[0];
    for &(p, v) in &scores[1..] {
        let tied = (v - best.1).abs() <= tol;
        if (!tied && v < best.1) || (tied && p < best.0) {
            best = (p, v);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    #[test]
    fn pure_sinusoid_has_no_residual() {
        for period in [24usize, 25, 144] {
            let s: Vec<f64> = (0..period * 6)
                .map(|t| 50.0 + 10.0 * (TAU * t as f64 / period as f64).sin())
                .collect();
            let d = decompose(&s, period).unwrap();
            let signal_var = sample_variance(&s);
            assert!(d.residual_variance <= 1e-10 * signal_var, "{period}: {}", d.residual_variance);
        }
    }

    #[test]
    fn ramp_is_all_trend() {
        let s: Vec<f64> = (0..400).map(|t| 3.0 + 0.25 * t as f64).collect();
        for period in [7usize, 24, 100] {
            let d = decompose(&s, period).unwrap();
            assert!(d.periodic.iter().all(|p| p.abs() < 1e-9));
            for (k, tr) in d.trend.iter().enumerate() {
                assert!((tr - s[d.start + k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_short() {
        assert!(matches!(decompose(&[1.0; 10], 6), Err(Error::Range(_))));
    }

    #[test]
    fn selection_rules() {
        let s: Vec<f64> = (0..200).map(|t| (t % 10) as f64).collect();
        assert_eq!(select_period(&s, &[7]).unwrap(), 7);
        assert!(matches!(select_period(&s, &[]), Err(Error::Config(_))));
        // A constant series has zero residual at every period.
        let flat = vec![4.0; 120];
        assert_eq!(select_period(&flat, &[12, 6, 30]).unwrap(), 6);
        assert_eq!(select_period(&s, &[7, 10, 13]).unwrap(), 10);
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(
            v in prop::collection::vec(0.0f64..100.0, 40..200),
            period in 2usize..20,
        ) {
            prop_assume!(v.len() >= 2 * period);
            let d = decompose(&v, period).unwrap();
            for t in d.start..d.end() {
                prop_assert!((d.reconstruct(t).unwrap() - v[t]).abs() <= 1e-9);
            }
            prop_assert!(d.periodic.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
