use std::fmt;
use std::ops::Range;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::DemandCube;
use crate::error::{Error, Result};

pub const DEFAULT_LAGS: usize = 20;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjungBox {
    pub q: f64,
    pub p: f64,
}

/// Sample autocorrelations at lags `1..=h`.
pub fn autocorrelations(series: &[f64], h: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    (1..=h)
        .map(|k| d[k..].iter().zip(&d[..n - k]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect()
}

/// Portmanteau statistic over `h` lags and its chi-square(`h`) upper-tail
/// p value.
pub fn ljung_box(series: &[f64], h: usize) -> Result<LjungBox> {
    let n = series.len();
    if h == 0 || n <= h {
        return Err(Error::Range(format!("Ljung-Box needs n > h >= 1, got n={n}, h={h}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    if series.iter().all(|&x| x == mean) {
        return Err(Error::Undefined("series has zero variance".into()));
    }
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * autocorrelations(series, h)
            .iter()
            .enumerate()
            .map(|(k, r)| r * r / (nf - (k + 1) as f64))
            .sum::<f64>();
    let chi = ChiSquared::new(h as f64).map_err(|e| Error::Range(e.to_string()))?;
    let p = if q <= 0.0 { 1.0 } else { chi.sf(q) };
    Ok(LjungBox { q, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Non-random: the test rejects at the significance level.
    G1,
    /// Random, or too degenerate to test.
    G2,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::G1 => "G1",
            Group::G2 => "G2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionClass {
    pub region: (usize, usize),
    pub group: Group,
    /// `None` for zero-variance series.
    pub test: Option<LjungBox>,
}

impl RegionClass {
    pub fn degenerate(&self) -> bool {
        self.test.is_none()
    }
}

pub fn classify_series(region: (usize, usize), series: &[f64], h: usize) -> Result<RegionClass> {
    match ljung_box(series, h) {
        Ok(t) => Ok(RegionClass {
            region,
            group: if t.p <= SIGNIFICANCE { Group::G1 } else { Group::G2 },
            test: Some(t),
        }),
        Err(Error::Undefined(_)) => Ok(RegionClass {
            region,
            group: Group::G2,
            test: None,
        }),
        Err(e) => Err(e),
    }
}

/// G1/G2 label of every region (row-major) from its demand over `range`.
pub fn classify_regions(cube: &DemandCube, range: Range<usize>, h: usize) -> Result<Vec<RegionClass>> {
    if range.end > cube.intervals() || range.start >= range.end {
        return Err(Error::Range(format!(
            "range {}..{} outside [0, {})",
            range.start,
            range.end,
            cube.intervals()
        )));
    }
    let mut out = Vec::with_capacity(cube.rows() * cube.cols());
    for i in 0..cube.rows() {
        for j in 0..cube.cols() {
            out.push(classify_series((i, j), &cube.region(i, j)[range.clone()], h)?);
        }
    }
    Ok(out)
}

pub fn classes_to_text(classes: &[RegionClass]) -> String {
    let mut s = String::from("i,j,q,p,group,flags\n");
    for c in classes {
        let (q, p) = match c.test {
            Some(t) => (t.q.to_string(), t.p.to_string()),
            None => ("-".into(), "-".into()),
        };
        let flag = if c.degenerate() { "zero-variance" } else { "-" };
        s.push_str(&format!("{},{},{q},{p},{},{flag}\n", c.region.0, c.region.1, c.group));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn tail_endpoints() {
        for h in [1usize, 5, 20, 100] {
            let chi = ChiSquared::new(h as f64).unwrap();
            assert_eq!(chi.sf(0.0), 1.0);
        }
        // sf(h) rises towards one half as the distribution symmetrises.
        let tails: Vec<f64> = [1usize, 10, 100, 1000]
            .iter()
            .map(|&h| ChiSquared::new(h as f64).unwrap().sf(h as f64))
            .collect();
        assert!(tails.windows(2).all(|w| w[0] < w[1] && w[1] < 0.5));
    }

    #[test]
    fn uncorrelated_series_gives_zero_q() {
        // Every neighbouring pair has a zero factor.
        let s = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let r = autocorrelations(&s, 1);
        assert!(r[0].abs() < 1e-12);
        let lb = ljung_box(&s, 1).unwrap();
        assert!(lb.q.abs() < 1e-12);
        assert_eq!(lb.p, 1.0);
    }

    #[test]
    fn q_matches_direct_formula() {
        let s = white(1, 50);
        let n = 50.0;
        let mean = s.iter().sum::<f64>() / n;
        let c0: f64 = s.iter().map(|x| (x - mean).powi(2)).sum();
        let mut q = 0.0;
        for k in 1..=5 {
            let ck: f64 = (k..50).map(|t| (s[t] - mean) * (s[t - k] - mean)).sum();
            q += (ck / c0).powi(2) / (n - k as f64);
        }
        q *= n * (n + 2.0);
        assert!((ljung_box(&s, 5).unwrap().q - q).abs() < 1e-10);
    }

    #[test]
    fn errors_and_degenerate() {
        assert!(matches!(ljung_box(&[1.0, 2.0], 2), Err(Error::Range(_))));
        assert!(matches!(ljung_box(&[3.0; 30], 5), Err(Error::Undefined(_))));
        let c = classify_series((0, 0), &[0.0; 30], 5).unwrap();
        assert_eq!(c.group, Group::G2);
        assert!(c.degenerate());
    }

    #[test]
    fn white_noise_p_values_are_uniform() {
        let mut p: Vec<f64> = (0..500).map(|s| ljung_box(&white(s, 1000), 20).unwrap().p).collect();
        p.sort_by(f64::total_cmp);
        let n = p.len() as f64;
        let d = p
            .iter()
            .enumerate()
            .map(|(k, &v)| ((k + 1) as f64 / n - v).max(v - k as f64 / n))
            .fold(0.0, f64::max);
        // Kolmogorov-Smirnov critical value at the 0.01 level.
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn partition_covers_grid() {
        let cfg = SynthConfig {
            rows: 4,
            cols: 4,
            period: 24,
            days: 10,
            noise_fraction: 0.5,
            seed: 2,
            ..SynthConfig::default()
        };
        let (cube, profiles) = synthesize(&cfg).unwrap();
        let classes = classify_regions(&cube, 0..cube.intervals(), 20).unwrap();
        assert_eq!(classes.len(), 16);
        for (c, p) in classes.iter().zip(&profiles) {
            if !p.white_noise {
                assert_eq!(c.group, Group::G1, "{:?}", c.region);
            }
        }
        let text = classes_to_text(&classes);
        assert_eq!(text.lines().count(), 17);
    }
}
