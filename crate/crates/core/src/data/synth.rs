//! Synthetic continuations from a fitted GP + HMM, and the default corpus
//! built from planted "observed" histories.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;

use super::gp::{fit_gp, GpFitConfig, GpHyper, GpModel};
use super::hmm::{fit_hmm, Hmm2, HmmConfig};
use super::{standardize, write_series_csv, SeriesRaw};

/// Precomputed posterior for repeated draws of one continuation.
#[derive(Debug, Clone)]
pub struct ContinuationSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    hmm: Hmm2,
    transform: (f64, f64),
    first_month: i64,
}

impl ContinuationSampler {
    pub fn new(gp: &GpModel, hmm: &Hmm2, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("continuation horizon must be positive".into()));
        }
        let grid = gp.future_grid(horizon);
        let (mean, cov) = gp.predict(&grid)?;
        let eig = SymmetricEigen::new(cov);
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(Self {
            mean,
            factor,
            hmm: hmm.clone(),
            transform: gp.transform,
            first_month: gp.last_month + 1,
        })
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    /// `E[x_hat]`: GP posterior mean plus the expected HMM offset.
    pub fn expected_latent(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(self.hmm.expected_offsets(self.horizon()))
            .map(|(m, o)| m + o)
            .collect()
    }

    pub fn gp_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// One draw of `x_hat = f + o + eps` in standardized units.
    pub fn sample_latent(&self, seed: u64) -> Vec<f64> {
        let h = self.horizon();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(h, |_, _| StandardNormal.sample(&mut rng));
        let f = &self.mean + &self.factor * z;

        let sd = self.hmm.variance.max(0.0).sqrt();
        let mut p = self.hmm.start;
        let mut out = Vec::with_capacity(h);
        for fv in f.iter() {
            let state = usize::from(rng.random::<f64>() >= p[0]);
            let eps: f64 = StandardNormal.sample(&mut rng);
            out.push(fv + self.hmm.offsets[state] + sd * eps);
            p = self.hmm.transition[state];
        }
        out
    }

    pub fn sample(&self, name: &str, seed: u64) -> SeriesRaw {
        let (mean, scale) = self.transform;
        let values = self
            .sample_latent(seed)
            .into_iter()
            .map(|x| ((scale * x + mean).exp() - 1.0).max(0.0))
            .collect();
        SeriesRaw {
            name: name.to_string(),
            values,
            months: (0..self.horizon() as i64).map(|j| self.first_month + j).collect(),
        }
    }
}

/// Continuation in standardized units.
pub fn synthesize_latent(gp: &GpModel, hmm: &Hmm2, horizon: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(ContinuationSampler::new(gp, hmm, horizon)?.sample_latent(seed))
}

/// Continuation mapped back to original units and clipped at zero.
pub fn synthesize(gp: &GpModel, hmm: &Hmm2, horizon: usize, seed: u64) -> Result<SeriesRaw> {
    Ok(ContinuationSampler::new(gp, hmm, horizon)?.sample("synthetic", seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_series: usize,
    pub observed_months: usize,
    pub continuation_months: usize,
    pub fit_months: usize,
    pub seed: u64,
    pub gp: GpFitConfig,
    pub hmm: HmmConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_series: 20,
            observed_months: 96,
            continuation_months: 36,
            fit_months: 60,
            seed: 1,
            gp: GpFitConfig::default(),
            hmm: HmmConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_series == 0 {
            return Err(Error::Config("n_series must be positive".into()));
        }
        if self.continuation_months == 0 {
            return Err(Error::Config("continuation horizon must be positive".into()));
        }
        if self.fit_months < 24 || self.fit_months > self.observed_months {
            return Err(Error::Config(format!(
                "fit_months must lie in [24, observed_months], got {}",
                self.fit_months
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub name: String,
    pub seed: u64,
    pub transform_mean: f64,
    pub transform_scale: f64,
    pub gp: GpHyper,
    pub gp_mll: f64,
    pub hmm: Hmm2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub series: Vec<SeriesRaw>,
    pub meta: Vec<SeriesMeta>,
}

#[derive(Serialize)]
struct MetaFile<'a> {
    config: &'a CorpusConfig,
    series: &'a [SeriesMeta],
}

impl Corpus {
    pub fn to_csv(&self) -> Result<String> {
        write_series_csv(&self.series)
    }

    pub fn meta_toml(&self) -> Result<String> {
        toml::to_string_pretty(&MetaFile {
            config: &self.config,
            series: &self.meta,
        })
        .map_err(|e| Error::Serde(e.to_string()))
    }
}

fn series_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Planted monthly histories: log-level with trend, annual seasonality, a
/// factor shared by all products, persistent regime shifts and noise.
pub fn planted_histories(n_series: usize, months: usize, seed: u64) -> Vec<SeriesRaw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut common = Vec::with_capacity(months);
    let mut c = 0.0;
    for _ in 0..months {
        let z: f64 = StandardNormal.sample(&mut rng);
        c = 0.9 * c + 0.12 * z;
        common.push(c);
    }
    (0..n_series)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(series_seed(seed, d));
            let level = rng.random_range(5.0..8.0);
            let z: f64 = StandardNormal.sample(&mut rng);
            let slope = 0.15 * z;
            let amp = rng.random_range(0.1..0.4);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let loading = rng.random_range(0.5..1.0);
            let shift = rng.random_range(0.1..0.3);
            let noise = rng.random_range(0.05..0.12);
            let mut high = false;
            let values = (0..months)
                .map(|m| {
                    if rng.random::<f64>() < 0.05 {
                        high = !high;
                    }
                    let tau = m as f64 / 12.0;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let log_y = level
                        + slope * tau
                        + amp * (std::f64::consts::TAU * tau + phase).sin()
                        + loading * common[m]
                        + if high { shift } else { -shift }
                        + noise * z;
                    log_y.exp() - 1.0
                })
                .collect();
            SeriesRaw::new(format!("series_{d:02}"), values)
        })
        .collect()
}

/// Fits GP + HMM to each planted history on its first `fit_months` and
/// appends a sampled continuation of `continuation_months`.
pub fn generate_corpus(cfg: &CorpusConfig, exec: Execution) -> Result<Corpus> {
    cfg.validate()?;
    let histories = planted_histories(cfg.n_series, cfg.observed_months, cfg.seed);
    let indexed: Vec<(usize, SeriesRaw)> = histories.into_iter().enumerate().collect();
    let built = exec.map(&indexed, |(d, raw)| extend_series(cfg, *d, raw));
    let mut series = Vec::with_capacity(cfg.n_series);
    let mut meta = Vec::with_capacity(cfg.n_series);
    for b in built {
        let (s, m) = b?;
        series.push(s);
        meta.push(m);
    }
    Ok(Corpus {
        config: cfg.clone(),
        series,
        meta,
    })
}

fn extend_series(cfg: &CorpusConfig, index: usize, raw: &SeriesRaw) -> Result<(SeriesRaw, SeriesMeta)> {
    let seed = series_seed(cfg.seed.wrapping_add(7), index);
    let std = standardize(raw, 0..cfg.fit_months)?;
    let gp_cfg = GpFitConfig {
        seed,
        ..cfg.gp.clone()
    };
    let fit = fit_gp(&std, &gp_cfg)?;
    let (fitted, _) = fit.model.predict(&std.tau)?;
    let residuals: Vec<f64> = std.x.iter().zip(fitted.iter()).map(|(x, f)| x - f).collect();
    let mut hmm = fit_hmm(&residuals[..cfg.fit_months], &cfg.hmm)?.hmm;
    hmm.condition_on(&residuals);
    let cont = ContinuationSampler::new(&fit.model, &hmm, cfg.continuation_months)?
        .sample(&raw.name, seed.wrapping_add(1));
    let mut full = raw.clone();
    full.values.extend(cont.values);
    full.months.extend(cont.months);
    Ok((
        full,
        SeriesMeta {
            name: raw.name.clone(),
            seed,
            transform_mean: std.mean,
            transform_scale: std.scale,
            gp: fit.model.hyper,
            gp_mll: fit.final_mll,
            hmm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_gp() -> GpModel {
        let hyper = GpHyper {
            mean: 0.0,
            rq_variance: 0.0,
            matern_variance: 0.0,
            periodic_variance: 0.0,
            noise_variance: 0.0,
            ..GpHyper::default()
        };
        GpModel::prior(hyper, (2.5, 0.7), 95)
    }

    #[test]
    fn all_randomness_off_is_constant() {
        let out = synthesize(&flat_gp(), &Hmm2::single(0.0, 0.0), 12, 4).unwrap();
        for v in &out.values {
            assert!((v - (2.5f64.exp() - 1.0)).abs() < 1e-9, "{v}");
        }
        assert_eq!(out.months[0], 96);
    }

    #[test]
    fn horizon_zero_rejected() {
        assert!(synthesize(&flat_gp(), &Hmm2::single(0.0, 0.0), 0, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let gp = GpModel::prior(GpHyper::default(), (1.0, 1.0), 0);
        let hmm = Hmm2::new([[0.9, 0.1], [0.1, 0.9]], [-0.5, 0.5], 0.1, [0.5, 0.5]).unwrap();
        assert_eq!(
            synthesize(&gp, &hmm, 24, 9).unwrap(),
            synthesize(&gp, &hmm, 24, 9).unwrap()
        );
        assert_ne!(
            synthesize(&gp, &hmm, 24, 9).unwrap(),
            synthesize(&gp, &hmm, 24, 10).unwrap()
        );
    }

    #[test]
    fn small_corpus_shape() {
        let cfg = CorpusConfig {
            n_series: 2,
            gp: GpFitConfig {
                iterations: 20,
                restarts: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let c = generate_corpus(&cfg, Execution::Sequential).unwrap();
        assert_eq!(c.series.len(), 2);
        assert!(c.series.iter().all(|s| s.values.len() == 132 && s.values.iter().all(|v| *v >= 0.0)));
        assert_eq!(c.series[0].months[131], 131);
        let again = generate_corpus(&cfg, Execution::Parallel).unwrap();
        assert_eq!(c, again);
        assert!(c.meta_toml().unwrap().contains("[[series]]"));
    }
}
