use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::GridSpec;

/// Demand counts per cell and interval, stored `[I, J, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandCube {
    pub grid: GridSpec,
    pub counts: Tensor<f64>,
}

impl DemandCube {
    pub fn new(grid: GridSpec, counts: Tensor<f64>) -> Result<Self> {
        grid.validate()?;
        counts.ensure_shape(&[grid.rows, grid.cols, grid.intervals])?;
        if let Some(v) = counts.data().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Range(format!("demand counts must be finite and >= 0, found {v}")));
        }
        Ok(Self { grid, counts })
    }

    pub fn rows(&self) -> usize {
        self.grid.rows
    }

    pub fn cols(&self) -> usize {
        self.grid.cols
    }

    pub fn intervals(&self) -> usize {
        self.grid.intervals
    }

    /// Demand series of one region; contiguous in the `[I, J, T]` layout.
    pub fn region(&self, i: usize, j: usize) -> &[f64] {
        let t = self.intervals();
        let off = (i * self.cols() + j) * t;
        &self.counts.data()[off..off + t]
    }

    /// City-wide demand per interval.
    pub fn total_series(&self) -> Vec<f64> {
        let t = self.intervals();
        let mut total = vec![0.0; t];
        for cell in self.counts.data().chunks_exact(t) {
            for (a, &v) in total.iter_mut().zip(cell) {
                *a += v;
            }
        }
        total
    }

    /// Total demand per region over `[lo, hi)`, shape `[I, J]`.
    pub fn region_totals(&self, lo: usize, hi: usize) -> Result<Tensor<f64>> {
        if lo >= hi || hi > self.intervals() {
            return Err(Error::Range(format!(
                "interval range [{lo}, {hi}) outside [0, {})",
                self.intervals()
            )));
        }
        let t = self.intervals();
        Tensor::from_vec(
            &[self.rows(), self.cols()],
            self.counts
                .data()
                .chunks_exact(t)
                .map(|c| c[lo..hi].iter().sum())
                .collect(),
        )
    }

    /// Counts over `range` as an `[I, J, range.len()]` tensor.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Tensor<f64>> {
        if range.start >= range.end || range.end > self.intervals() {
            return Err(Error::Range(format!(
                "interval range [{}, {}) outside [0, {})",
                range.start,
                range.end,
                self.intervals()
            )));
        }
        let t = self.intervals();
        let data = self.counts.data().chunks_exact(t).flat_map(|c| c[range.clone()].iter().copied()).collect();
        Tensor::from_vec(&[self.rows(), self.cols(), range.len()], data)
    }

    /// Demand matrix `X_t`, shape `[I, J]`.
    pub fn slice<T: Scalar>(&self, t: usize) -> Tensor<T> {
        slice_of(&self.counts, t)
    }

    pub fn to_text(&self) -> String {
        write_cube_text(&self.grid, &self.counts)
    }

    pub fn from_text<R: BufRead>(reader: R) -> Result<Self> {
        let (grid, counts) = read_cube_text(reader)?;
        Self::new(grid, counts)
    }
}

pub(crate) fn slice_of<T: Scalar>(counts: &Tensor<f64>, t: usize) -> Tensor<T> {
    let s = counts.shape();
    let (rows, cols, n) = (s[0], s[1], s[2]);
    Tensor::from_fn(&[rows, cols], |cell| T::of(counts.data()[cell * n + t])).expect("non-empty grid")
}

/// Serialises any `[I, J, T]` tensor in the cube text format: a header line
/// `I J T t0 dt lon_min lon_max lat_min lat_max`, then for each interval `I`
/// lines of `J` space-separated values.
pub fn write_cube_text(grid: &GridSpec, values: &Tensor<f64>) -> String {
    let (rows, cols, n) = (grid.rows, grid.cols, grid.intervals);
    let mut out = String::with_capacity(rows * cols * n * 3 + 64);
    let _ = writeln!(
        out,
        "{rows} {cols} {n} {} {} {} {} {} {}",
        grid.t0, grid.dt, grid.lon_min, grid.lon_max, grid.lat_min, grid.lat_max
    );
    let d = values.data();
    for t in 0..n {
        for i in 0..rows {
            for j in 0..cols {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", d[(i * cols + j) * n + t]);
            }
            out.push('\n');
        }
    }
    out
}

/// Parses the cube text format without enforcing nonnegativity.
pub fn read_cube_text<R: BufRead>(reader: R) -> Result<(GridSpec, Tensor<f64>)> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()));
    let (_, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty cube file".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 9 {
        return Err(Error::Format(format!("cube header needs 9 fields, found {}", h.len())));
    }
    let bad = |k: usize| Error::Format(format!("cube header field {} `{}` is invalid", k + 1, h[k]));
    let u = |k: usize| h[k].parse::<usize>().map_err(|_| bad(k));
    let i = |k: usize| h[k].parse::<i64>().map_err(|_| bad(k));
    let f = |k: usize| h[k].parse::<f64>().map_err(|_| bad(k));
    let grid = GridSpec {
        rows: u(0)?,
        cols: u(1)?,
        intervals: u(2)?,
        t0: i(3)?,
        dt: i(4)?,
        lon_min: f(5)?,
        lon_max: f(6)?,
        lat_min: f(7)?,
        lat_max: f(8)?,
    };
    grid.validate().map_err(|e| Error::Format(format!("cube header: {e}")))?;
    let (rows, cols, n) = (grid.rows, grid.cols, grid.intervals);
    let mut values = Tensor::zeros(&[rows, cols, n])?;
    for t in 0..n {
        for i in 0..rows {
            let (line_no, line) = lines.next().transpose()?.ok_or_else(|| {
                Error::Format(format!("cube file ends early at interval {t}, row {i}"))
            })?;
            let mut count = 0;
            for (j, tok) in line.split_whitespace().enumerate() {
                if j >= cols {
                    count = j + 1;
                    break;
                }
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad value `{tok}`"),
                })?;
                values.data_mut()[(i * cols + j) * n + t] = v;
                count = j + 1;
            }
            if count != cols {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {cols} values"),
                });
            }
        }
    }
    if let Some(extra) = lines.next().transpose()? {
        return Err(Error::Parse {
            line: extra.0,
            message: "unexpected data after last interval".into(),
        });
    }
    Ok((grid, values))
}
