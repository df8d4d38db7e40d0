use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::metrics::{aggregate_subset, global_rmse, region_metrics, AggregateRow, Metric, MetricValues, Mode, RegionSeries, Weights};
use super::randomness::{Group, RegionClass};

#[derive(Debug, Clone, PartialEq)]
pub struct RegionEntry {
    pub region: (usize, usize),
    pub alpha: f64,
    pub metrics: MetricValues,
    pub group: Option<Group>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub group: Group,
    pub regions: usize,
    pub plain: AggregateRow,
    pub weighted: AggregateRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub regions: Vec<RegionEntry>,
    pub plain: AggregateRow,
    pub weighted: AggregateRow,
    pub global_rmse: f64,
    /// Empty when no classification was supplied.
    pub partitions: Vec<PartitionSummary>,
    /// Regions with at least one undefined metric, and why.
    pub skipped: Vec<((usize, usize), String)>,
}

impl EvalReport {
    pub fn partition(&self, g: Group) -> Option<&PartitionSummary> {
        self.partitions.iter().find(|p| p.group == g)
    }
}

/// Scores `pred` against `truth` (both `[I, J, T]`) region by region.
pub fn evaluate(
    truth: &Tensor<f64>,
    pred: &Tensor<f64>,
    weights: &Weights,
    classes: Option<&[RegionClass]>,
    c: f64,
) -> Result<EvalReport> {
    let series = RegionSeries::from_tensors(truth, pred)?;
    weights.alpha.ensure_shape(&truth.shape()[..2])?;
    if let Some(cl) = classes {
        if cl.len() != series.len() {
            return Err(Error::mismatch(&[series.len()], &[cl.len()]));
        }
    }
    let mut regions = Vec::with_capacity(series.len());
    let mut skipped = Vec::new();
    for (k, rs) in series.iter().enumerate() {
        let metrics = region_metrics(rs, c)?;
        let class = classes.map(|cl| &cl[k]);
        let mut flags: Vec<String> = metrics.undefined().iter().map(|m| format!("{m}-undefined")).collect();
        if !flags.is_empty() {
            skipped.push((rs.region, flags.join(" ")));
        }
        if class.is_some_and(|c| c.degenerate()) {
            flags.push("zero-variance".into());
        }
        regions.push(RegionEntry {
            region: rs.region,
            alpha: weights.get(k),
            metrics,
            group: class.map(|c| c.group),
            flags,
        });
    }
    let table: Vec<MetricValues> = regions.iter().map(|r| r.metrics).collect();
    let all: Vec<usize> = (0..table.len()).collect();
    let mut partitions = Vec::new();
    if classes.is_some() {
        for g in [Group::G1, Group::G2] {
            let cells: Vec<usize> = all.iter().copied().filter(|&k| regions[k].group == Some(g)).collect();
            partitions.push(PartitionSummary {
                group: g,
                regions: cells.len(),
                plain: aggregate_subset(&table, weights, &cells, Mode::Plain),
                weighted: aggregate_subset(&table, weights, &cells, Mode::Weighted),
            });
        }
    }
    Ok(EvalReport {
        plain: aggregate_subset(&table, weights, &all, Mode::Plain),
        weighted: aggregate_subset(&table, weights, &all, Mode::Weighted),
        global_rmse: global_rmse(truth, pred)?,
        regions,
        partitions,
        skipped,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_string(), |v| v.to_string())
}

fn metric_header() -> String {
    Metric::ALL.map(|m| m.name()).join(",")
}

fn row_values(row: &AggregateRow) -> String {
    Metric::ALL.map(|m| fmt_opt(row.get(m))).join(",")
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# regions").unwrap();
        writeln!(s, "i,j,alpha,{},group,flags", metric_header()).unwrap();
        for r in &self.regions {
            let metrics = r.metrics.0.map(fmt_opt).join(",");
            let group = r.group.map_or_else(|| "-".to_string(), |g| g.to_string());
            let flags = if r.flags.is_empty() { "-".to_string() } else { r.flags.join(" ") };
            writeln!(s, "{},{},{},{metrics},{group},{flags}", r.region.0, r.region.1, r.alpha).unwrap();
        }
        writeln!(s, "# aggregates").unwrap();
        writeln!(s, "mode,{}", metric_header()).unwrap();
        for row in [&self.plain, &self.weighted] {
            writeln!(s, "{},{}", row.mode.name(), row_values(row)).unwrap();
        }
        writeln!(s, "global_rmse,{}", self.global_rmse).unwrap();
        if !self.partitions.is_empty() {
            writeln!(s, "# partitions").unwrap();
            writeln!(s, "group,regions,mode,{}", metric_header()).unwrap();
            for p in &self.partitions {
                for row in [&p.plain, &p.weighted] {
                    writeln!(s, "{},{},{},{}", p.group, p.regions, row.mode.name(), row_values(row)).unwrap();
                }
            }
        }
        writeln!(s, "# excluded").unwrap();
        writeln!(s, "mode,metric,regions,alpha_mass").unwrap();
        for row in [&self.plain, &self.weighted] {
            for (m, r) in &row.values {
                match r {
                    Ok(a) if a.excluded_regions > 0 => {
                        writeln!(s, "{},{m},{},{}", row.mode.name(), a.excluded_regions, a.excluded_mass).unwrap()
                    }
                    Ok(_) => {}
                    Err(_) => writeln!(s, "{},{m},all,1", row.mode.name()).unwrap(),
                }
            }
        }
        for (region, why) in &self.skipped {
            writeln!(s, "# skipped {},{}: {why}", region.0, region.1).unwrap();
        }
        s
    }
}

/// RMSE over the grid at each interval of two `[I, J, T]` tensors.
pub fn rmse_by_interval(truth: &Tensor<f64>, pred: &Tensor<f64>) -> Result<Vec<f64>> {
    pred.ensure_shape(truth.shape())?;
    let &[rows, cols, n] = truth.shape() else {
        return Err(Error::mismatch(&[0, 0, 0], truth.shape()));
    };
    let cells = rows * cols;
    Ok((0..n)
        .map(|t| {
            let se: f64 = (0..cells)
                .map(|c| (truth.data()[c * n + t] - pred.data()[c * n + t]).powi(2))
                .sum();
            (se / cells as f64).sqrt()
        })
        .collect())
}

/// Running mean `m_k = (v_1 + .. + v_k) / k`.
pub fn cumulative_mean(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            acc += v;
            acc / (k + 1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalstats::classify_series;

    fn cube(rows: usize, cols: usize, n: usize, f: impl Fn(usize) -> f64) -> Tensor<f64> {
        Tensor::from_fn(&[rows, cols, n], f).unwrap()
    }

    #[test]
    fn identity_has_zero_aggregates() {
        let x = cube(2, 3, 30, |k| (k % 7) as f64);
        let w = Weights::uniform(2, 3).unwrap();
        let r = evaluate(&x, &x, &w, None, 1.0).unwrap();
        for m in Metric::ALL {
            assert_eq!(r.plain.get(m), Some(0.0));
            assert_eq!(r.weighted.get(m), Some(0.0));
        }
        assert_eq!(r.global_rmse, 0.0);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn uniform_weights_match_plain() {
        let x = cube(3, 3, 20, |k| ((k * 31) % 11) as f64);
        let p = cube(3, 3, 20, |k| ((k * 17) % 13) as f64);
        let w = Weights::uniform(3, 3).unwrap();
        let r = evaluate(&x, &p, &w, None, 1.0).unwrap();
        for m in Metric::ALL {
            assert!((r.plain.get(m).unwrap() - r.weighted.get(m).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_region_is_skipped_and_reported() {
        let x = cube(1, 2, 10, |k| if k < 10 { 0.0 } else { 5.0 });
        let p = cube(1, 2, 10, |k| if k < 10 { 0.0 } else { 4.0 });
        let alpha = Tensor::from_vec(&[1, 2], vec![0.25, 0.75]).unwrap();
        let w = Weights::new(alpha).unwrap();
        let classes: Vec<_> = (0..2)
            .map(|c| classify_series((0, c), &x.data()[c * 10..(c + 1) * 10], 3).unwrap())
            .collect();
        let r = evaluate(&x, &p, &w, Some(&classes), 1.0).unwrap();
        assert_eq!(r.skipped.len(), 1);
        let (_, nrmse) = r.weighted.values.iter().find(|(m, _)| *m == Metric::Nrmse).unwrap();
        let nrmse = nrmse.as_ref().unwrap();
        assert_eq!(nrmse.excluded_regions, 1);
        assert!((nrmse.excluded_mass - 0.25).abs() < 1e-15);
        assert!((nrmse.value - 0.2).abs() < 1e-12);
        assert_eq!(r.partition(Group::G2).unwrap().regions, 2);
        let text = r.to_text();
        assert!(text.contains("weighted,nrmse,1,0.25"));
        assert!(text.contains("zero-variance"));
    }

    #[test]
    fn running_mean() {
        assert_eq!(cumulative_mean(&[2.0, 4.0, 6.0]), vec![2.0, 3.0, 4.0]);
        let x = cube(1, 2, 2, |k| k as f64);
        let p = cube(1, 2, 2, |_| 0.0);
        let r = rmse_by_interval(&x, &p).unwrap();
        assert!((r[0] - (4.0f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((r[1] - (10.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }
}
