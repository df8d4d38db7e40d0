//! End-to-end fitting and one-step-ahead prediction over a demand cube.

use std::ops::Range;

use rayon::prelude::*;

use crate::data::{difference_transform, earliest_target, make_samples_from, DemandCube, SampleSet};
use crate::error::{Error, Result};
use crate::models::{build_variant, AdditiveModel, ModelConfig, ModelGraph, RegionModel, Variant};
use crate::tensor::Tensor;
use crate::training::{train, TrainConfig, TrainReport};

/// The series a variant is trained on: raw counts, or the seasonal-then-first
/// difference at `lag`.
pub fn model_series(variant: Variant, cube: &DemandCube, lag: usize) -> Result<Tensor<f64>> {
    if variant.differenced() {
        Ok(difference_transform(cube, lag)?.values)
    } else {
        Ok(cube.counts.clone())
    }
}

/// Earliest target index with a complete, well-defined input volume.
pub fn first_target(variant: Variant, cfg: &ModelConfig, lag: usize) -> usize {
    let base = earliest_target(cfg.recent, cfg.period, lag);
    if variant.differenced() {
        // Differences before lag + 1 are placeholders.
        base + lag + 1
    } else {
        base
    }
}

/// Root mean square of the targets, used to bring inputs to unit order.
fn rms_scale(set: &SampleSet<f64>) -> f64 {
    let (mut ss, mut n) = (0.0, 0usize);
    for s in &set.samples {
        ss += s.target.data().iter().map(|v| v * v).sum::<f64>();
        n += s.target.len();
    }
    let rms = if n > 0 { (ss / n as f64).sqrt() } else { 0.0 };
    if rms > 0.0 {
        rms
    } else {
        1.0
    }
}

fn samples_for(
    variant: Variant,
    cube: &DemandCube,
    cfg: &ModelConfig,
    lag: usize,
    range: Range<usize>,
) -> Result<SampleSet<f64>> {
    let series = model_series(variant, cube, lag)?;
    let start = range.start.max(first_target(variant, cfg, lag));
    let set = make_samples_from(&series, cfg.recent, cfg.period, lag, start..range.end.max(start))?;
    if set.samples.is_empty() {
        return Err(Error::Range(format!(
            "no training targets in {}..{} once {} intervals of history are reserved",
            range.start,
            range.end,
            start
        )));
    }
    Ok(set)
}

/// Builds and trains one grid network on targets in `train_range`.
pub fn fit_network(
    variant: Variant,
    cube: &DemandCube,
    lag: usize,
    train_range: Range<usize>,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelGraph<f64>, TrainReport)> {
    if matches!(variant, Variant::Ann | Variant::Custom) {
        return Err(Error::Config(format!("`{variant}` is not a grid network variant")));
    }
    let cfg = ModelConfig {
        rows: cube.rows(),
        cols: cube.cols(),
        ..mcfg.clone()
    };
    let mut model = build_variant(variant, &cfg)?;
    let set = samples_for(variant, cube, &cfg, lag, train_range)?;
    model.scale = rms_scale(&set);
    let report = train(&mut model, &set.samples, tcfg)?;
    Ok((model, report))
}

/// One-step-ahead demand predictions `[I, J, range.len()]` from observed
/// history, clamped at zero.
pub fn predict_network(
    model: &ModelGraph<f64>,
    cube: &DemandCube,
    lag: usize,
    recent: usize,
    period: usize,
    range: Range<usize>,
) -> Result<Tensor<f64>> {
    let [rows, cols, depth] = model.input_spec;
    if rows != cube.rows() || cols != cube.cols() || depth != recent + period {
        return Err(Error::mismatch(&model.input_spec, &[cube.rows(), cube.cols(), recent + period]));
    }
    let cfg = ModelConfig {
        recent,
        period,
        ..ModelConfig::default()
    };
    let first = first_target(model.variant, &cfg, lag);
    if range.start < first || range.end > cube.intervals() || range.start >= range.end {
        return Err(Error::Range(format!(
            "prediction range {}..{} must lie in [{first}, {})",
            range.start,
            range.end,
            cube.intervals()
        )));
    }
    let diff = if model.variant.differenced() {
        Some(difference_transform(cube, lag)?)
    } else {
        None
    };
    let series = diff.as_ref().map_or(&cube.counts, |d| &d.values);
    let set = make_samples_from::<f64>(series, recent, period, lag, range.clone())?;
    let slices: Vec<Tensor<f64>> = set
        .samples
        .par_iter()
        .map(|s| {
            let y = model.forward(&s.input)?;
            match &diff {
                Some(d) => d.invert_at(s.t, &y),
                None => Ok(y),
            }
        })
        .collect::<Result<_>>()?;
    Ok(stack(&slices, rows, cols, |v| v.max(0.0)))
}

/// Stacks `[I, J]` slices along time into `[I, J, T]`.
fn stack(slices: &[Tensor<f64>], rows: usize, cols: usize, f: impl Fn(f64) -> f64) -> Tensor<f64> {
    let n = slices.len();
    Tensor::from_fn(&[rows, cols, n], |k| f(slices[k % n].data()[k / n])).expect("non-empty")
}

/// Classical per-region predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Ann,
    Additive,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Ann => "ann",
            Baseline::Additive => "additive",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ann" => Ok(Baseline::Ann),
            "additive" => Ok(Baseline::Additive),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

/// Per-region baselines fitted independently on `train_range`.
pub fn fit_region_models(
    baseline: Baseline,
    cube: &DemandCube,
    lag: usize,
    train_range: Range<usize>,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Vec<RegionModel<f64>>> {
    let cells: Vec<(usize, usize)> = (0..cube.rows())
        .flat_map(|i| (0..cube.cols()).map(move |j| (i, j)))
        .collect();
    match baseline {
        Baseline::Ann => {
            let set = samples_for(Variant::Ann, cube, mcfg, lag, train_range)?;
            cells
                .par_iter()
                .map(|&(i, j)| {
                    let cfg = ModelConfig {
                        seed: mcfg.seed.wrapping_add((i * cube.cols() + j) as u64),
                        ..mcfg.clone()
                    };
                    let mut model = build_variant(Variant::Ann, &cfg)?;
                    let region: Vec<_> = set.samples.iter().map(|s| s.region(i, j)).collect();
                    model.scale = rms_scale(&SampleSet {
                        samples: region.clone(),
                        skipped: 0,
                    });
                    train(&mut model, &region, tcfg)?;
                    Ok(RegionModel::Ann { region: (i, j), model })
                })
                .collect()
        }
        Baseline::Additive => cells
            .iter()
            .map(|&(i, j)| {
                AdditiveModel::fit((i, j), cube.region(i, j), train_range.clone(), lag).map(RegionModel::Additive)
            })
            .collect(),
    }
}

/// Predictions of per-region baselines, laid out like [`predict_network`].
pub fn predict_regions(
    models: &[RegionModel<f64>],
    cube: &DemandCube,
    lag: usize,
    recent: usize,
    period: usize,
    range: Range<usize>,
) -> Result<Tensor<f64>> {
    let (rows, cols) = (cube.rows(), cube.cols());
    if models.len() != rows * cols {
        return Err(Error::mismatch(&[rows * cols], &[models.len()]));
    }
    if range.end > cube.intervals() || range.start >= range.end {
        return Err(Error::Range(format!(
            "prediction range {}..{} outside [0, {})",
            range.start,
            range.end,
            cube.intervals()
        )));
    }
    let n = range.len();
    let mut out = vec![0.0; rows * cols * n];
    let needs_volumes = models.iter().any(|m| matches!(m, RegionModel::Ann { .. }));
    let set = if needs_volumes {
        Some(make_samples_from::<f64>(&cube.counts, recent, period, lag, range.clone())?)
    } else {
        None
    };
    if let Some(s) = &set {
        if s.skipped > 0 {
            return Err(Error::Range(format!(
                "prediction range starts {} intervals before enough history exists",
                s.skipped
            )));
        }
    }
    for (cell, m) in models.iter().enumerate() {
        let (i, j) = m.region();
        if (i, j) != (cell / cols, cell % cols) {
            return Err(Error::State(format!("region model {cell} is for {:?}", (i, j))));
        }
        let row = &mut out[cell * n..(cell + 1) * n];
        match m {
            RegionModel::Additive(a) => {
                for (k, t) in range.clone().enumerate() {
                    row[k] = a.predict(t)?.max(0.0);
                }
            }
            RegionModel::Ann { model, .. } => {
                let samples = &set.as_ref().expect("volumes built").samples;
                for (k, s) in samples.iter().enumerate() {
                    row[k] = model.forward(&s.region(i, j).input)?.data()[0].max(0.0);
                }
            }
        }
    }
    Tensor::from_vec(&[rows, cols, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synthesize, SynthConfig};

    fn tiny_cube() -> DemandCube {
        synthesize(&SynthConfig {
            rows: 4,
            cols: 4,
            period: 12,
            days: 8,
            dt: 7200,
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap()
        .0
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            recent: 3,
            period: 3,
            kernel_depths: vec![2, 2],
            temporal_filters: 3,
            conv2d_filters: 3,
            conv2d_layers: 1,
            head_filters: 2,
            cnn_hidden: 8,
            ann_hidden: 4,
            ..ModelConfig::default()
        }
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            max_epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn every_variant_predicts_the_test_range() {
        let cube = tiny_cube();
        let (train_r, test_r) = split(&cube, 6, 2).unwrap();
        for v in Variant::GRID {
            let (m, report) = fit_network(v, &cube, 12, train_r.clone(), &tiny_model(), &quick()).unwrap();
            assert_eq!(report.epochs.len(), 2);
            let p = predict_network(&m, &cube, 12, 3, 3, test_r.clone()).unwrap();
            assert_eq!(p.shape(), &[4, 4, 24]);
            assert!(p.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
        for v in [Variant::Ann, Variant::Custom] {
            assert!(matches!(
                fit_network(v, &cube, 12, train_r.clone(), &tiny_model(), &quick()),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn baselines_predict_the_test_range() {
        let cube = tiny_cube();
        let (train_r, test_r) = split(&cube, 6, 2).unwrap();
        for b in [Baseline::Ann, Baseline::Additive] {
            let models = fit_region_models(b, &cube, 12, train_r.clone(), &tiny_model(), &quick()).unwrap();
            assert_eq!(models.len(), 16);
            let p = predict_regions(&models, &cube, 12, 3, 3, test_r.clone()).unwrap();
            assert_eq!(p.shape(), &[4, 4, 24]);
        }
    }

    #[test]
    fn baseline_names() {
        assert_eq!("additive".parse::<Baseline>().unwrap(), Baseline::Additive);
        assert_eq!(Baseline::Ann.name().parse::<Baseline>().unwrap(), Baseline::Ann);
        assert!(matches!("arima".parse::<Baseline>(), Err(Error::Config(_))));
    }

    #[test]
    fn prediction_needs_history() {
        let cube = tiny_cube();
        let (train_r, _) = split(&cube, 6, 2).unwrap();
        let (m, _) = fit_network(Variant::LcStFcnDiff, &cube, 12, train_r, &tiny_model(), &quick()).unwrap();
        // Differenced volumes need lag + 1 extra intervals before the earliest target.
        assert!(matches!(predict_network(&m, &cube, 12, 3, 3, 10..20), Err(Error::Range(_))));
        assert!(predict_network(&m, &cube, 12, 3, 3, 28..30).is_ok());
    }
}
