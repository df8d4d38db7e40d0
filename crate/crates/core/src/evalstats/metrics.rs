use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Rmse,
    Nrmse,
    Mape,
    Smape1,
    Smape2,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Rmse, Metric::Nrmse, Metric::Mape, Metric::Smape1, Metric::Smape2];
    /// The scale-free percentage errors.
    pub const PERCENTAGE: [Metric; 3] = [Metric::Mape, Metric::Smape1, Metric::Smape2];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Nrmse => "nrmse",
            Metric::Mape => "mape",
            Metric::Smape1 => "smape1",
            Metric::Smape2 => "smape2",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Truth and prediction of one region over the evaluated range.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub region: (usize, usize),
    pub truth: Vec<f64>,
    pub pred: Vec<f64>,
}

impl RegionSeries {
    /// Every region of two `[I, J, T]` tensors, row-major.
    pub fn from_tensors(truth: &Tensor<f64>, pred: &Tensor<f64>) -> Result<Vec<RegionSeries>> {
        pred.ensure_shape(truth.shape())?;
        let &[rows, cols, n] = truth.shape() else {
            return Err(Error::mismatch(&[0, 0, 0], truth.shape()));
        };
        Ok((0..rows * cols)
            .map(|cell| RegionSeries {
                region: (cell / cols, cell % cols),
                truth: truth.data()[cell * n..(cell + 1) * n].to_vec(),
                pred: pred.data()[cell * n..(cell + 1) * n].to_vec(),
            })
            .collect())
    }
}

/// The five metrics of one region; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValues(pub [Option<f64>; 5]);

impl MetricValues {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.0[m.index()]
    }

    pub fn undefined(&self) -> Vec<Metric> {
        Metric::ALL.into_iter().filter(|&m| self.get(m).is_none()).collect()
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// RMSE, NRMSE, MAPE, sMAPE1 and sMAPE2 with smoothing constant `c`.
///
/// NRMSE is undefined when the truth is all zero and sMAPE2 when
/// `Σ|x + x̂| = 0`; MAPE and sMAPE1 are undefined if any per-point
/// denominator is not positive.
pub fn region_metrics(rs: &RegionSeries, c: f64) -> Result<MetricValues> {
    let (x, p) = (&rs.truth, &rs.pred);
    if x.len() != p.len() {
        return Err(Error::mismatch(&[x.len()], &[p.len()]));
    }
    if x.is_empty() {
        return Err(Error::Range(format!("region {:?} has an empty series", rs.region)));
    }
    if x.iter().any(|&v| v < 0.0) {
        return Err(Error::Range(format!("region {:?} has negative demand", rs.region)));
    }
    let n = x.len() as f64;
    let (mut se, mut sx2, mut sabs, mut ssum) = (0.0, 0.0, 0.0, 0.0);
    let (mut mape, mut smape1) = (Some(0.0), Some(0.0));
    for (&xt, &pt) in x.iter().zip(p) {
        let e = (xt - pt).abs();
        se += e * e;
        sx2 += xt * xt;
        sabs += e;
        ssum += (xt + pt).abs();
        mape = mape.and_then(|m| ratio(e, xt + c).map(|r| m + r));
        smape1 = smape1.and_then(|m| ratio(e, xt + pt + c).map(|r| m + r));
    }
    Ok(MetricValues([
        Some((se / n).sqrt()),
        ratio(se, sx2).map(f64::sqrt),
        mape.map(|m| m / n),
        smape1.map(|m| m / n),
        ratio(sabs, ssum),
    ]))
}

/// Root mean squared error pooled over every cell and interval.
pub fn global_rmse(truth: &Tensor<f64>, pred: &Tensor<f64>) -> Result<f64> {
    let d = truth.sub(pred)?;
    Ok((d.data().iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt())
}

/// Region shares of training demand, `[I, J]`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub alpha: Tensor<f64>,
}

impl Weights {
    pub fn new(alpha: Tensor<f64>) -> Result<Self> {
        if alpha.data().iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::Range("weights must be >= 0".into()));
        }
        if (alpha.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Range(format!("weights sum to {}, not 1", alpha.sum())));
        }
        Ok(Self { alpha })
    }

    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        let n = (rows * cols) as f64;
        Self::new(Tensor::filled(&[rows, cols], 1.0 / n)?)
    }

    /// Shares of `totals` (non-negative, not all zero).
    pub fn from_totals(totals: &Tensor<f64>) -> Result<Self> {
        let sum = totals.sum();
        if !(sum > 0.0) {
            return Err(Error::Undefined("no training demand to derive weights from".into()));
        }
        let mut alpha = totals.scale(1.0 / sum);
        // Push the rounding residue onto the largest share so the sum is exact
        // to well within tolerance.
        let resid = 1.0 - alpha.sum();
        if let Some(k) = (0..alpha.len()).max_by(|&a, &b| alpha.data()[a].total_cmp(&alpha.data()[b])) {
            alpha.data_mut()[k] += resid;
        }
        Self::new(alpha)
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.alpha.data()[cell]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Weighted,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Weighted => "weighted",
        }
    }
}

/// One aggregated metric plus what was left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricAggregate {
    pub value: f64,
    pub excluded_regions: usize,
    pub excluded_mass: f64,
}

/// Aggregates `(value, α)` pairs: the plain mean or the α-weighted mean over
/// the regions where the metric is defined.
pub fn aggregate_metric(entries: &[(Option<f64>, f64)], mode: Mode) -> Result<MetricAggregate> {
    let (mut sum, mut mass, mut count) = (0.0, 0.0, 0usize);
    let (mut excluded_regions, mut excluded_mass) = (0, 0.0);
    for &(v, a) in entries {
        match v {
            Some(v) => {
                let w = if mode == Mode::Plain { 1.0 } else { a };
                sum += w * v;
                mass += w;
                count += 1;
            }
            None => {
                excluded_regions += 1;
                excluded_mass += a;
            }
        }
    }
    if count == 0 || !(mass > 0.0) {
        return Err(Error::Undefined(format!(
            "metric undefined in all {} regions carrying weight",
            entries.len()
        )));
    }
    Ok(MetricAggregate {
        value: sum / mass,
        excluded_regions,
        excluded_mass,
    })
}

/// Per-metric aggregates over a table; an undefined aggregate keeps the
/// message explaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub mode: Mode,
    pub values: Vec<(Metric, std::result::Result<MetricAggregate, String>)>,
}

impl AggregateRow {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values
            .iter()
            .find(|(k, _)| *k == m)
            .and_then(|(_, r)| r.as_ref().ok().map(|a| a.value))
    }
}

/// Aggregates every metric of `table` (row-major regions) with `weights`.
pub fn aggregate(table: &[MetricValues], weights: &Weights, mode: Mode) -> Result<AggregateRow> {
    if table.len() != weights.alpha.len() {
        return Err(Error::mismatch(weights.alpha.shape(), &[table.len()]));
    }
    let cells: Vec<usize> = (0..table.len()).collect();
    Ok(aggregate_subset(table, weights, &cells, mode))
}

pub(crate) fn aggregate_subset(table: &[MetricValues], weights: &Weights, cells: &[usize], mode: Mode) -> AggregateRow {
    let values = Metric::ALL
        .into_iter()
        .map(|m| {
            let entries: Vec<(Option<f64>, f64)> = cells.iter().map(|&k| (table[k].get(m), weights.get(k))).collect();
            (m, aggregate_metric(&entries, mode).map_err(|e| e.to_string()))
        })
        .collect();
    AggregateRow { mode, values }
}
