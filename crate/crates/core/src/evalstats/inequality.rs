use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const KL_SMOOTHING: f64 = 1e-9;

/// `D(P‖Q) = Σ p log(p/q)` after adding `eps` to every bin and normalising.
pub fn kl_histograms(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::mismatch(&[p.len()], &[q.len()]));
    }
    let sp: f64 = p.iter().map(|v| v + eps).sum();
    let sq: f64 = q.iter().map(|v| v + eps).sum();
    Ok(p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (a, b) = ((a + eps) / sp, (b + eps) / sq);
            if a > 0.0 {
                a * (a / b).ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .max(0.0))
}

/// Counts per bin `floor(v / bin_width)` of both series over the union of
/// occupied bins, in bin order.
pub fn histograms(truth: &[f64], pred: &[f64], bin_width: f64) -> Result<(Vec<i64>, Vec<f64>, Vec<f64>)> {
    if !(bin_width > 0.0) {
        return Err(Error::Config("bin width must be > 0".into()));
    }
    let mut bins: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for &v in truth {
        bins.entry((v / bin_width).floor() as i64).or_default().0 += 1.0;
    }
    for &v in pred {
        bins.entry((v / bin_width).floor() as i64).or_default().1 += 1.0;
    }
    let keys = bins.keys().copied().collect();
    let (p, q) = bins.values().copied().unzip();
    Ok((keys, p, q))
}

/// KL divergence of the prediction's value distribution from the truth's.
pub fn kl_divergence(truth: &[f64], pred: &[f64], bin_width: f64) -> Result<f64> {
    if truth.is_empty() || pred.is_empty() {
        return Err(Error::Range("KL divergence of an empty series".into()));
    }
    let (_, p, q) = histograms(truth, pred, bin_width)?;
    kl_histograms(&p, &q, KL_SMOOTHING)
}

/// Lorenz curve points `(population share, demand share)` from `(0, 0)` to
/// `(1, 1)`, regions sorted by ascending total.
pub fn lorenz(totals: &[f64]) -> Result<Vec<(f64, f64)>> {
    if totals.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Range("region totals must be >= 0".into()));
    }
    let sum: f64 = totals.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Undefined("all region totals are zero".into()));
    }
    let mut sorted = totals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut acc = 0.0;
    let mut points = vec![(0.0, 0.0)];
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        points.push(((k + 1) as f64 / n, acc / sum));
    }
    Ok(points)
}

/// One minus twice the trapezoid area under the Lorenz curve.
pub fn gini(totals: &[f64]) -> Result<f64> {
    let points = lorenz(totals)?;
    let n = totals.len() as f64;
    let area2: f64 = points.windows(2).map(|w| (w[1].1 + w[0].1) / n).sum();
    Ok(1.0 - area2)
}
