use std::io::BufRead;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::DemandCube;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub longitude: f64,
    pub latitude: f64,
}

/// Rectangular lon/lat box split into `rows × cols` cells, plus `intervals`
/// time bins of `dt` seconds starting at `t0`.
///
/// Rows index latitude bands from `lat_min` upward, columns index longitude
/// bands from `lon_min` eastward. Every bin is half-open `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub rows: usize,
    pub cols: usize,
    pub t0: i64,
    pub dt: i64,
    pub intervals: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lon_min, self.lon_max, self.lat_min, self.lat_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.lon_min >= self.lon_max || self.lat_min >= self.lat_max {
            return Err(Error::Config(format!(
                "bounding box lon [{}, {}) lat [{}, {}) is empty or not finite",
                self.lon_min, self.lon_max, self.lat_min, self.lat_max
            )));
        }
        if self.rows == 0 || self.cols == 0 || self.intervals == 0 {
            return Err(Error::Config("grid rows, cols and intervals must be >= 1".into()));
        }
        if self.dt <= 0 {
            return Err(Error::Config(format!("interval length dt={} must be > 0", self.dt)));
        }
        Ok(())
    }

    /// Index of the half-open band of `[lo, hi)` split into `n` bands.
    fn band(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
        if !(v >= lo && v < hi) {
            return None;
        }
        let span = hi - lo;
        let edge = |k: usize| lo + span * k as f64 / n as f64;
        let mut k = (((v - lo) / span) * n as f64).floor() as usize;
        k = k.min(n - 1);
        // Rounding in the division can land one band off near an edge.
        if k + 1 < n && v >= edge(k + 1) {
            k += 1;
        } else if k > 0 && v < edge(k) {
            k -= 1;
        }
        Some(k)
    }

    /// Lower edge of latitude band `i`.
    pub fn lat_edge(&self, i: usize) -> f64 {
        self.lat_min + (self.lat_max - self.lat_min) * i as f64 / self.rows as f64
    }

    /// Lower edge of longitude band `j`.
    pub fn lon_edge(&self, j: usize) -> f64 {
        self.lon_min + (self.lon_max - self.lon_min) * j as f64 / self.cols as f64
    }

    /// `(row, col, interval)` of a record, or `None` when it falls outside.
    pub fn locate(&self, r: &TripRecord) -> Option<(usize, usize, usize)> {
        let i = Self::band(r.latitude, self.lat_min, self.lat_max, self.rows)?;
        let j = Self::band(r.longitude, self.lon_min, self.lon_max, self.cols)?;
        let k = (r.timestamp - self.t0).div_euclid(self.dt);
        if k < 0 || k as usize >= self.intervals {
            return None;
        }
        Some((i, j, k as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub accepted: usize,
    pub out_of_range: usize,
    /// `(line number, message)` for lines that could not be parsed.
    pub diagnostics: Vec<(usize, String)>,
}

/// Bins records into a demand cube. Records outside the box or window are
/// counted in the report and dropped.
pub fn ingest<I>(records: I, grid: &GridSpec) -> Result<(DemandCube, IngestReport)>
where
    I: IntoIterator<Item = TripRecord>,
{
    grid.validate()?;
    let mut counts = Tensor::<f64>::zeros(&[grid.rows, grid.cols, grid.intervals])?;
    let mut report = IngestReport::default();
    for r in records {
        match grid.locate(&r) {
            Some((i, j, k)) => {
                let off = (i * grid.cols + j) * grid.intervals + k;
                counts.data_mut()[off] += 1.0;
                report.accepted += 1;
            }
            None => report.out_of_range += 1,
        }
    }
    Ok((DemandCube::new(*grid, counts)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeFormat {
    Epoch,
    Iso,
}

fn parse_iso(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

fn parse_time(s: &str, fmt: TimeFormat) -> Option<i64> {
    match fmt {
        TimeFormat::Epoch => s.parse().ok(),
        TimeFormat::Iso => parse_iso(s),
    }
}

/// Parses a trip file: `timestamp,longitude,latitude` per line with an
/// optional header. Timestamps are either integer epoch seconds or ISO-8601;
/// the format is fixed by the first data line. Bad lines become diagnostics.
pub fn read_trips<R: BufRead>(reader: R) -> Result<(Vec<TripRecord>, Vec<(usize, String)>)> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut format = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let fmt = match format {
            Some(f) => f,
            None => {
                if fields.len() != 3 {
                    return Err(Error::Format(format!(
                        "line {line_no}: expected 3 comma-separated fields, found {}",
                        fields.len()
                    )));
                }
                if fields[1].parse::<f64>().is_err() {
                    if records.is_empty() && fields[0].eq_ignore_ascii_case("timestamp") {
                        continue;
                    }
                    return Err(Error::Format(format!("line {line_no}: unrecognised header `{line}`")));
                }
                let f = if fields[0].parse::<i64>().is_ok() {
                    TimeFormat::Epoch
                } else if parse_iso(fields[0]).is_some() {
                    TimeFormat::Iso
                } else {
                    return Err(Error::Format(format!(
                        "line {line_no}: timestamp `{}` is neither epoch seconds nor ISO-8601",
                        fields[0]
                    )));
                };
                format = Some(f);
                f
            }
        };
        if fields.len() != 3 {
            diagnostics.push((line_no, format!("expected 3 fields, found {}", fields.len())));
            continue;
        }
        let Some(timestamp) = parse_time(fields[0], fmt) else {
            diagnostics.push((line_no, format!("bad timestamp `{}`", fields[0])));
            continue;
        };
        let (Ok(longitude), Ok(latitude)) = (fields[1].parse::<f64>(), fields[2].parse::<f64>()) else {
            diagnostics.push((line_no, "bad coordinate".to_string()));
            continue;
        };
        if !longitude.is_finite() || !latitude.is_finite() {
            diagnostics.push((line_no, "non-finite coordinate".to_string()));
            continue;
        }
        records.push(TripRecord {
            timestamp,
            longitude,
            latitude,
        });
    }
    Ok((records, diagnostics))
}
