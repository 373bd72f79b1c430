use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagMode {
    #[default]
    Univariate,
    Multivariate,
}

/// Supervised view of one or more aligned series.
///
/// Row `i` holds, for every channel `c` in order, the block
/// `(x_c[i], ..., x_c[i + k - 1])`; its targets are
/// `x_c[i + k - 1 + horizon]` for every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDataset {
    x: Vec<f64>,
    y: Vec<f64>,
    rows: usize,
    lag: usize,
    channels: usize,
    horizon: usize,
    split_index: usize,
}

pub fn build_lags(series: &[&[f64]], lag: usize, horizon: usize, mode: LagMode) -> Result<LagDataset> {
    if lag == 0 || horizon == 0 {
        return Err(Error::Config("lag and horizon must be at least 1".into()));
    }
    match (mode, series.len()) {
        (_, 0) => return Err(Error::Data("no series given".into())),
        (LagMode::Univariate, n) if n != 1 => {
            return Err(Error::Config(format!("univariate mode takes one series, got {n}")))
        }
        _ => {}
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Data("channels have different lengths".into()));
    }
    if len < lag + horizon {
        return Err(Error::Data(format!(
            "series of length {len} is shorter than lag {lag} + horizon {horizon}"
        )));
    }
    let rows = len - lag - horizon + 1;
    let channels = series.len();
    let mut x = Vec::with_capacity(rows * lag * channels);
    let mut y = Vec::with_capacity(rows * channels);
    for i in 0..rows {
        for s in series {
            x.extend_from_slice(&s[i..i + lag]);
        }
        for s in series {
            y.push(s[i + lag - 1 + horizon]);
        }
    }
    Ok(LagDataset {
        x,
        y,
        rows,
        lag,
        channels,
        horizon,
        split_index: rows * 4 / 5,
    })
}

impl LagDataset {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_features(&self) -> usize {
        self.lag * self.channels
    }

    /// First test row: `floor(0.8 * rows)`.
    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn train_rows(&self) -> Range<usize> {
        0..self.split_index
    }

    pub fn test_rows(&self) -> Range<usize> {
        self.split_index..self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_features();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.y[i * self.channels..(i + 1) * self.channels]
    }

    pub fn targets(&self, rows: Range<usize>) -> Vec<f64> {
        self.y[rows.start * self.channels..rows.end * self.channels].to_vec()
    }

    /// Row `i` as a `lag`-step sequence of per-step channel vectors.
    pub fn sequence(&self, i: usize) -> Vec<Vec<f64>> {
        let row = self.row(i);
        (0..self.lag)
            .map(|t| (0..self.channels).map(|c| row[c * self.lag + t]).collect())
            .collect()
    }

    /// Most recent observation in row `i`, one value per channel.
    pub fn last_step(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        (0..self.channels)
            .map(|c| row[c * self.lag + self.lag - 1])
            .collect()
    }

    /// Observations in time order such that row `i` ends at step `i + lag - 1`.
    /// Used to drive a reservoir continuously across rows.
    pub fn stream(&self) -> Vec<Vec<f64>> {
        let mut out = self.sequence(0);
        out.extend((1..self.rows).map(|i| self.last_step(i)));
        out
    }

    /// Naive persistence forecast for the given rows (repeat the last observation).
    pub fn persistence(&self, rows: Range<usize>) -> Vec<f64> {
        rows.flat_map(|i| self.last_step(i)).collect()
    }
}
