use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, Write as _};
use std::ops::Range;
use std::path::Path;

use demandnet::data::{
    decompose as decompose_series, ingest as bin_trips, period_scores, read_cube_text, read_trips, select_period,
    split, synthesize, write_cube_text, DemandCube, GridSpec,
};
use demandnet::evalstats::{
    classes_to_text, classify_regions, cumulative_mean, evaluate as score, gini, histograms, kl_divergence, lorenz,
    rmse_by_interval, Group, Weights,
};
use demandnet::forecast::{fit_network, fit_region_models, predict_network, predict_regions, Baseline};
use demandnet::models::{load_checkpoint, save_checkpoint, Variant};
use demandnet::Error;

use crate::config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn in_file(path: &Path, e: Error) -> CliError {
    CliError::new(e.category(), format!("{}: {e}", path.display()))
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Writes to `path`, or stdout when none is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new("io", format!("stdout: {e}"))),
    }
}

fn required<'a>(value: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::new("config", format!("missing `{key}`: pass --{key} or set key `{key}`")))
}

fn plot_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| io_err(path, e))?))
}

fn load_cube(path: &Path) -> Result<DemandCube> {
    DemandCube::from_text(open(path)?).map_err(|e| in_file(path, e))
}

/// Period length from the config, or the best candidate on the training
/// window's city-wide demand.
fn lag_for(cfg: &RunConfig, cube: &DemandCube, train: &Range<usize>) -> Result<usize> {
    match cfg.lag {
        Some(l) => Ok(l),
        None => Ok(select_period(&cube.total_series()[train.clone()], &cfg.candidates)?),
    }
}

fn per_day(grid: &GridSpec) -> usize {
    (86_400 / grid.dt).max(1) as usize
}

pub fn ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = required(&cfg.trips, "trips")?;
    let (records, diagnostics) = read_trips(open(path)?).map_err(|e| in_file(path, e))?;
    for (line, msg) in &diagnostics {
        eprintln!("warning: {}:{line}: {msg}", path.display());
    }
    let (cube, report) = bin_trips(records, &cfg.grid)?;
    write_file(out, cube.to_text().as_bytes())?;
    eprintln!(
        "accepted {} records, {} outside the grid, {} unreadable lines",
        report.accepted,
        report.out_of_range,
        diagnostics.len()
    );
    Ok(())
}

pub fn decompose(cfg: &RunConfig, out: Option<&Path>, plots: Option<&Path>) -> Result<()> {
    let cube = load_cube(required(&cfg.cube, "cube")?)?;
    let series = cube.total_series();
    let scores = period_scores(&series, &cfg.candidates)?;
    let best = select_period(&series, &cfg.candidates)?;
    let mut s = String::from("period,residual_variance\n");
    for (p, v) in &scores {
        writeln!(s, "{p},{v}").unwrap();
    }
    writeln!(s, "# selected={best}").unwrap();
    emit(out, &s)?;

    if let Some(dir) = plots {
        plot_dir(dir)?;
        let day = per_day(&cube.grid);
        let days = (series.len() / day).max(1);
        let mut daily = String::from("interval,mean_demand\n");
        for k in 0..day.min(series.len()) {
            let total: f64 = series.iter().skip(k).step_by(day).take(days).sum();
            writeln!(daily, "{k},{}", total / days as f64).unwrap();
        }
        write_file(&dir.join("daily_demand.csv"), daily.as_bytes())?;

        let d = decompose_series(&series, best)?;
        let mut table = String::from("t,observed,trend,periodic,residual\n");
        for (k, (tr, r)) in d.trend.iter().zip(&d.residual).enumerate() {
            let t = d.start + k;
            writeln!(table, "{t},{},{tr},{},{r}", series[t], d.periodic[t % best]).unwrap();
        }
        write_file(&dir.join("decomposition.csv"), table.as_bytes())?;
    }
    Ok(())
}

fn grid_variant(name: &str) -> Result<Variant> {
    let v: Variant = name.parse()?;
    if matches!(v, Variant::Ann | Variant::Custom) {
        return Err(CliError::new(
            "config",
            format!("key `variant`: `{name}` is not a grid network; use `predict --baseline` for per-region models"),
        ));
    }
    Ok(v)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let cube = load_cube(required(&cfg.cube, "cube")?)?;
    let ckpt = required(&cfg.checkpoint, "checkpoint")?;
    let variant = grid_variant(&cfg.variant)?;
    let (train_r, _) = split(&cube, cfg.train_days, cfg.test_days)?;
    let lag = lag_for(cfg, &cube, &train_r)?;
    let (model, report) = fit_network(variant, &cube, lag, train_r, &cfg.model, &cfg.train)?;
    write_file(ckpt, &save_checkpoint(&model))?;
    emit(cfg.report.as_deref(), &report.to_text())
}

pub fn predict(cfg: &RunConfig, baseline: Option<&str>) -> Result<()> {
    let cube = load_cube(required(&cfg.cube, "cube")?)?;
    let (train_r, test_r) = split(&cube, cfg.train_days, cfg.test_days)?;
    let lag = lag_for(cfg, &cube, &train_r)?;
    let (recent, period) = (cfg.model.recent, cfg.model.period);
    let pred = match baseline {
        Some(name) => {
            let b: Baseline = name.parse()?;
            let models = fit_region_models(b, &cube, lag, train_r, &cfg.model, &cfg.train)?;
            predict_regions(&models, &cube, lag, recent, period, test_r.clone())?
        }
        None => {
            let path = required(&cfg.checkpoint, "checkpoint")?;
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            let model = load_checkpoint::<f64>(&bytes).map_err(|e| in_file(path, e))?;
            predict_network(&model, &cube, lag, recent, period, test_r.clone())?
        }
    };
    let grid = GridSpec {
        t0: cube.grid.t0 + test_r.start as i64 * cube.grid.dt,
        intervals: test_r.len(),
        ..cube.grid
    };
    emit(cfg.prediction.as_deref(), &write_cube_text(&grid, &pred))
}

/// Offset of a prediction window inside the truth cube.
fn align(truth: &GridSpec, pred: &GridSpec) -> Result<usize> {
    if (truth.rows, truth.cols, truth.dt) != (pred.rows, pred.cols, pred.dt) {
        return Err(CliError::new(
            "shape",
            format!(
                "prediction grid {}x{} at dt={} does not match truth {}x{} at dt={}",
                pred.rows, pred.cols, pred.dt, truth.rows, truth.cols, truth.dt
            ),
        ));
    }
    let shift = pred.t0 - truth.t0;
    if shift < 0 || shift % truth.dt != 0 {
        return Err(CliError::new("range", "prediction does not start on a truth interval"));
    }
    let offset = (shift / truth.dt) as usize;
    if offset + pred.intervals > truth.intervals {
        return Err(CliError::new("range", "prediction extends past the truth cube"));
    }
    Ok(offset)
}

pub fn evaluate(cfg: &RunConfig, plots: Option<&Path>) -> Result<()> {
    let truth = load_cube(required(&cfg.cube, "truth")?)?;
    let pred_path = required(&cfg.prediction, "pred")?;
    let (pgrid, pred) = read_cube_text(open(pred_path)?).map_err(|e| in_file(pred_path, e))?;
    let offset = align(&truth.grid, &pgrid)?;
    let window = truth.window(offset..offset + pgrid.intervals)?;

    // Weights and the G1/G2 split come from the training days.
    let train_end = (cfg.train_days * per_day(&truth.grid)).min(truth.intervals());
    let weights = Weights::from_totals(&truth.region_totals(0, train_end)?)?;
    let classes = classify_regions(&truth, 0..train_end, cfg.lags)?;
    let report = score(&window, &pred, &weights, Some(&classes), cfg.c)?;
    let kl = kl_divergence(window.data(), pred.data(), cfg.bin_width)?;
    let mut text = report.to_text();
    writeln!(text, "# kl_divergence={kl}").unwrap();
    emit(cfg.report.as_deref(), &text)?;

    if let Some(dir) = plots {
        plot_dir(dir)?;
        let rmse = rmse_by_interval(&window, &pred)?;
        let cma = cumulative_mean(&rmse);
        let mut s = String::from("t,rmse,cumulative_mean\n");
        for (k, (r, m)) in rmse.iter().zip(&cma).enumerate() {
            writeln!(s, "{},{r},{m}", offset + k).unwrap();
        }
        write_file(&dir.join("cma_rmse.csv"), s.as_bytes())?;
        let (bins, p, q) = histograms(window.data(), pred.data(), cfg.bin_width)?;
        let mut s = String::from("bin_start,truth,prediction\n");
        for ((b, p), q) in bins.iter().zip(&p).zip(&q) {
            writeln!(s, "{},{p},{q}", *b as f64 * cfg.bin_width).unwrap();
        }
        write_file(&dir.join("value_histogram.csv"), s.as_bytes())?;
    }
    Ok(())
}

pub fn classify(cfg: &RunConfig, out: Option<&Path>, plots: Option<&Path>) -> Result<()> {
    let cube = load_cube(required(&cfg.cube, "cube")?)?;
    let classes = classify_regions(&cube, 0..cube.intervals(), cfg.lags)?;
    let totals = cube.region_totals(0, cube.intervals())?;
    let g = gini(totals.data())?;
    let g1 = classes.iter().filter(|c| c.group == Group::G1).count();
    let mut text = classes_to_text(&classes);
    writeln!(text, "# g1={g1} g2={} gini={g}", classes.len() - g1).unwrap();
    emit(out, &text)?;

    if let Some(dir) = plots {
        plot_dir(dir)?;
        let mut s = String::from("population_share,demand_share\n");
        for (x, y) in lorenz(totals.data())? {
            writeln!(s, "{x},{y}").unwrap();
        }
        write_file(&dir.join("lorenz.csv"), s.as_bytes())?;

        // How often each demand level occurs in G1 and G2 regions.
        let mut freq: std::collections::BTreeMap<i64, [u64; 2]> = Default::default();
        for c in &classes {
            let k = if c.group == Group::G1 { 0 } else { 1 };
            for &v in cube.region(c.region.0, c.region.1) {
                freq.entry((v / cfg.bin_width).floor() as i64).or_default()[k] += 1;
            }
        }
        let mut s = String::from("demand,g1,g2\n");
        for (b, [a, c]) in freq {
            writeln!(s, "{},{a},{c}", b as f64 * cfg.bin_width).unwrap();
        }
        write_file(&dir.join("region_frequencies.csv"), s.as_bytes())?;
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path, profiles: Option<&Path>) -> Result<()> {
    let (cube, regions) = synthesize(&cfg.synth)?;
    write_file(out, cube.to_text().as_bytes())?;
    if let Some(p) = profiles {
        let mut s = String::from("i,j,base,amplitude,mix,white_noise\n");
        for (k, r) in regions.iter().enumerate() {
            let (i, j) = (k / cube.cols(), k % cube.cols());
            writeln!(s, "{i},{j},{},{},{},{}", r.base, r.amplitude, r.mix, r.white_noise).unwrap();
        }
        write_file(p, s.as_bytes())?;
    }
    Ok(())
}
