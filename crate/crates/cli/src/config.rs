//! Flat `key = value` run configuration.

use std::path::PathBuf;
use std::str::FromStr;

use demandnet::data::{GridSpec, NoiseKind, SynthConfig};
use demandnet::models::ModelConfig;
use demandnet::training::TrainConfig;
use demandnet::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub trips: Option<PathBuf>,
    pub cube: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub prediction: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub grid: GridSpec,
    /// Period length `L` in intervals; chosen from `candidates` when unset.
    pub lag: Option<usize>,
    pub candidates: Vec<usize>,
    pub variant: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_days: usize,
    pub test_days: usize,
    /// Smoothing constant of the percentage errors.
    pub c: f64,
    /// Ljung–Box lag count.
    pub lags: usize,
    pub bin_width: f64,
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            trips: None,
            cube: None,
            checkpoint: None,
            prediction: None,
            report: None,
            grid: synth.grid(),
            lag: None,
            candidates: vec![144, 1008],
            variant: "lc_st_fcn".into(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_days: 21,
            test_days: 9,
            c: 1.0,
            lags: 20,
            bin_width: 1.0,
            synth,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_noise(key: &str, value: &str) -> Result<NoiseKind> {
    match value.split_once(':') {
        None if value == "poisson" => Ok(NoiseKind::Poisson),
        Some(("gaussian", sd)) => Ok(NoiseKind::Gaussian(parse(key, sd)?)),
        _ => Err(Error::Config(format!(
            "key `{key}`: expected `poisson` or `gaussian:<sd>`, got `{value}`"
        ))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        match key {
            "trips" => self.trips = path(),
            "cube" => self.cube = path(),
            "checkpoint" => self.checkpoint = path(),
            "prediction" => self.prediction = path(),
            "report" => self.report = path(),
            "lon_min" => self.grid.lon_min = parse(key, v)?,
            "lon_max" => self.grid.lon_max = parse(key, v)?,
            "lat_min" => self.grid.lat_min = parse(key, v)?,
            "lat_max" => self.grid.lat_max = parse(key, v)?,
            "rows" => self.grid.rows = parse(key, v)?,
            "cols" => self.grid.cols = parse(key, v)?,
            "t0" => self.grid.t0 = parse(key, v)?,
            "dt" => self.grid.dt = parse(key, v)?,
            "intervals" => self.grid.intervals = parse(key, v)?,
            "lag" => self.lag = Some(parse(key, v)?),
            "candidates" => self.candidates = parse_list(key, v)?,
            "variant" => self.variant = v.to_string(),
            "recent" => self.model.recent = parse(key, v)?,
            "period" => self.model.period = parse(key, v)?,
            "kernel_depths" => self.model.kernel_depths = parse_list(key, v)?,
            "temporal_filters" => self.model.temporal_filters = parse(key, v)?,
            "conv2d_filters" => self.model.conv2d_filters = parse(key, v)?,
            "conv2d_layers" => self.model.conv2d_layers = parse(key, v)?,
            "head_filters" => self.model.head_filters = parse(key, v)?,
            "cnn_hidden" => self.model.cnn_hidden = parse(key, v)?,
            "ann_hidden" => self.model.ann_hidden = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "adagrad_epsilon" => self.train.adagrad_epsilon = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "validation_fraction" => self.train.validation_fraction = parse(key, v)?,
            "train_days" => self.train_days = parse(key, v)?,
            "test_days" => self.test_days = parse(key, v)?,
            "c" => self.c = parse(key, v)?,
            "lags" => self.lags = parse(key, v)?,
            "bin_width" => self.bin_width = parse(key, v)?,
            "days" => self.synth.days = parse(key, v)?,
            "peak_rate" => self.synth.peak_rate = parse(key, v)?,
            "floor_rate" => self.synth.floor_rate = parse(key, v)?,
            "seasonal_amplitude" => self.synth.seasonal_amplitude = parse(key, v)?,
            "noise_fraction" => self.synth.noise_fraction = parse(key, v)?,
            "noise_rate" => self.synth.noise_rate = parse(key, v)?,
            "trend" => self.synth.trend = parse(key, v)?,
            "drift_amplitude" => self.synth.drift_amplitude = parse(key, v)?,
            "drift_period" => self.synth.drift_period = parse(key, v)?,
            "weekend_factor" => self.synth.weekend_factor = parse(key, v)?,
            "noise" => self.synth.noise = parse_noise(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{source}:{}: expected `key = value`, got `{line}`",
                    n + 1
                )));
            };
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("{source}:{}: {}", n + 1, strip(&e))))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not `key=value`")))?;
        self.set(k.trim(), v)
    }

    /// Model, training and synthetic settings share the one seed; the grid
    /// of a synthetic cube follows rows, cols, dt and t0.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut r = self.clone();
        r.model.seed = self.seed;
        r.train.seed = self.seed;
        r.model.rows = self.grid.rows;
        r.model.cols = self.grid.cols;
        r.synth.seed = self.seed;
        r.synth.rows = self.grid.rows;
        r.synth.cols = self.grid.cols;
        r.synth.dt = self.grid.dt;
        r.synth.t0 = self.grid.t0;
        if self.grid.dt <= 0 || 86_400 % self.grid.dt != 0 {
            return Err(Error::Config(format!("key `dt`: {} does not divide a day", self.grid.dt)));
        }
        r.synth.period = (86_400 / self.grid.dt) as usize;
        if !(self.c >= 0.0) {
            return Err(Error::Config("key `c`: must be >= 0".into()));
        }
        if self.lags == 0 {
            return Err(Error::Config("key `lags`: must be >= 1".into()));
        }
        if self.candidates.is_empty() && self.lag.is_none() {
            return Err(Error::Config("key `candidates`: empty and no `lag` given".into()));
        }
        r.train.validate()?;
        Ok(r)
    }
}

fn strip(e: &Error) -> String {
    let s = e.to_string();
    s.strip_prefix("config error: ").map(str::to_string).unwrap_or(s)
}
