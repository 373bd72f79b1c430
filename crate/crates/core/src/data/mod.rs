//! Series preprocessing, the GP + two-state HMM synthetic generator, lag
//! windows and CSV ingestion.

mod csv_io;
pub mod gp;
pub mod hmm;
mod lags;
pub mod synth;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{ingest_csv, write_series_csv};
pub use gp::{fit_gp, GpFit, GpFitConfig, GpHyper, GpModel};
pub use hmm::{fit_hmm, Hmm2, HmmConfig, HmmFit};
pub use lags::{build_lags, LagDataset, LagMode};
pub use synth::{generate_corpus, synthesize, synthesize_latent, Corpus, CorpusConfig};

/// A monthly series in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRaw {
    pub name: String,
    pub values: Vec<f64>,
    pub months: Vec<i64>,
}

impl SeriesRaw {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let months = (0..values.len() as i64).collect();
        Self {
            name: name.into(),
            values,
            months,
        }
    }

    pub fn clipped(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.max(0.0)).collect()
    }
}

/// Standardized log-values `x = (log(1 + max(y, 0)) - mean) / scale`, with the
/// statistics taken over `fit_window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStd {
    pub name: String,
    pub x: Vec<f64>,
    pub mean: f64,
    pub scale: f64,
    /// Years since the first month.
    pub tau: Vec<f64>,
    pub months: Vec<i64>,
    pub fit_window: Range<usize>,
}

impl SeriesStd {
    /// Back to original units: `exp(scale * x + mean) - 1`.
    pub fn invert_value(&self, x: f64) -> f64 {
        (self.scale * x + self.mean).exp() - 1.0
    }

    pub fn invert(&self) -> Vec<f64> {
        self.x.iter().map(|&x| self.invert_value(x)).collect()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn fit_tau(&self) -> &[f64] {
        &self.tau[self.fit_window.clone()]
    }

    pub fn fit_x(&self) -> &[f64] {
        &self.x[self.fit_window.clone()]
    }
}

pub fn standardize(raw: &SeriesRaw, fit_window: Range<usize>) -> Result<SeriesStd> {
    if raw.values.len() != raw.months.len() {
        return Err(Error::Data(format!(
            "series {}: {} values but {} months",
            raw.name,
            raw.values.len(),
            raw.months.len()
        )));
    }
    if fit_window.is_empty() || fit_window.end > raw.values.len() {
        return Err(Error::Data(format!(
            "fit window {fit_window:?} invalid for series of length {}",
            raw.values.len()
        )));
    }
    if raw.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("series {} has non-finite values", raw.name)));
    }
    let u: Vec<f64> = raw.clipped().iter().map(|v| v.ln_1p()).collect();
    let window = &u[fit_window.clone()];
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = var.sqrt();
    if !(scale > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::ConstantSeries);
    }
    let m0 = raw.months.iter().copied().min().unwrap_or(0);
    Ok(SeriesStd {
        name: raw.name.clone(),
        x: u.iter().map(|v| (v - mean) / scale).collect(),
        mean,
        scale,
        tau: raw.months.iter().map(|&m| (m - m0) as f64 / 12.0).collect(),
        months: raw.months.clone(),
        fit_window,
    })
}
