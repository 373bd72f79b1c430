//! Gaussian-process model of the smooth component with a constant mean and a
//! rational-quadratic + Matérn(3/2) + periodic kernel, fitted by ascent on the
//! log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SeriesStd;

pub const JITTER: f64 = 1e-6;
const N_HYPER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub mean: f64,
    pub rq_variance: f64,
    pub rq_lengthscale: f64,
    pub rq_alpha: f64,
    pub matern_variance: f64,
    pub matern_lengthscale: f64,
    pub periodic_variance: f64,
    pub periodic_lengthscale: f64,
    /// In years.
    pub period: f64,
    pub noise_variance: f64,
}

impl Default for GpHyper {
    fn default() -> Self {
        Self {
            mean: 0.0,
            rq_variance: 0.5,
            rq_lengthscale: 1.0,
            rq_alpha: 1.0,
            matern_variance: 0.3,
            matern_lengthscale: 0.25,
            periodic_variance: 0.3,
            periodic_lengthscale: 1.0,
            period: 1.0,
            noise_variance: 0.1,
        }
    }
}

// (lower, upper) bounds in the optimizer's coordinates: mean raw, the rest log.
const BOUNDS: [(f64, f64); N_HYPER] = [
    (-5.0, 5.0),
    (-13.8, 4.6),
    (-3.9, 3.0),
    (-3.0, 3.9),
    (-13.8, 4.6),
    (-3.9, 3.0),
    (-13.8, 4.6),
    (-3.0, 3.0),
    (-1.39, 1.39),
    (-13.8, 2.3),
];

impl GpHyper {
    fn to_vec(self) -> [f64; N_HYPER] {
        [
            self.mean,
            self.rq_variance.ln(),
            self.rq_lengthscale.ln(),
            self.rq_alpha.ln(),
            self.matern_variance.ln(),
            self.matern_lengthscale.ln(),
            self.periodic_variance.ln(),
            self.periodic_lengthscale.ln(),
            self.period.ln(),
            self.noise_variance.ln(),
        ]
    }

    fn from_vec(v: &[f64; N_HYPER]) -> Self {
        Self {
            mean: v[0],
            rq_variance: v[1].exp(),
            rq_lengthscale: v[2].exp(),
            rq_alpha: v[3].exp(),
            matern_variance: v[4].exp(),
            matern_lengthscale: v[5].exp(),
            periodic_variance: v[6].exp(),
            periodic_lengthscale: v[7].exp(),
            period: v[8].exp(),
            noise_variance: v[9].exp(),
        }
    }

    /// Latent covariance `k(t1, t2)` (no observation noise).
    pub fn kernel(&self, t1: f64, t2: f64) -> f64 {
        self.kernel_terms(t1, t2).0
    }

    /// Kernel value and its derivatives with respect to the log-parameters
    /// `[rq_var, rq_len, rq_alpha, m_var, m_len, p_var, p_len, period]`.
    fn kernel_terms(&self, t1: f64, t2: f64) -> (f64, [f64; 8]) {
        let r = (t1 - t2).abs();
        let r2 = r * r;

        let b = 1.0 + r2 / (2.0 * self.rq_alpha * self.rq_lengthscale * self.rq_lengthscale);
        let k_rq = self.rq_variance * b.powf(-self.rq_alpha);
        let d_rq_len = self.rq_variance * b.powf(-self.rq_alpha - 1.0) * r2
            / (self.rq_lengthscale * self.rq_lengthscale);
        let d_rq_alpha = k_rq * self.rq_alpha * ((b - 1.0) / b - b.ln());

        let s = 3f64.sqrt() * r / self.matern_lengthscale;
        let e = (-s).exp();
        let k_m = self.matern_variance * (1.0 + s) * e;
        let d_m_len = self.matern_variance * s * s * e;

        let u = std::f64::consts::PI * r / self.period;
        let sin_u = u.sin();
        let l2 = self.periodic_lengthscale * self.periodic_lengthscale;
        let k_p = self.periodic_variance * (-2.0 * sin_u * sin_u / l2).exp();
        let d_p_len = k_p * 4.0 * sin_u * sin_u / l2;
        let d_period = k_p * (2.0 / l2) * (2.0 * u).sin() * u;

        (
            k_rq + k_m + k_p,
            [k_rq, d_rq_len, d_rq_alpha, k_m, d_m_len, k_p, d_p_len, d_period],
        )
    }

    pub fn kernel_matrix(&self, tau: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(tau.len(), tau.len(), |i, j| self.kernel(tau[i], tau[j]))
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

fn factor(k: DMatrix<f64>, hyper: &GpHyper) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(k).ok_or_else(|| Error::NotPsd(hyper.describe()))
}

/// Log marginal likelihood and its gradient in optimizer coordinates.
pub fn log_marginal_likelihood(hyper: &GpHyper, tau: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = tau.len();
    let mut k = DMatrix::zeros(n, n);
    let mut dk = vec![DMatrix::<f64>::zeros(n, n); 8];
    for i in 0..n {
        for j in 0..=i {
            let (v, d) = hyper.kernel_terms(tau[i], tau[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
            for (m, dv) in dk.iter_mut().zip(d) {
                m[(i, j)] = dv;
                m[(j, i)] = dv;
            }
        }
    }
    for i in 0..n {
        k[(i, i)] += hyper.noise_variance + JITTER;
    }
    let chol = factor(k, hyper)?;
    let resid = DVector::from_iterator(n, x.iter().map(|v| v - hyper.mean));
    let alpha = chol.solve(&resid);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mll = -0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // d/dθ = ½ tr((α αᵀ − K⁻¹) dK/dθ)
    let k_inv = chol.inverse();
    let a = &alpha * alpha.transpose() - k_inv;
    let mut grad = vec![0.0; N_HYPER];
    grad[0] = alpha.sum();
    for (g, m) in grad[1..9].iter_mut().zip(&dk) {
        *g = 0.5 * a.component_mul(m).sum();
    }
    grad[9] = 0.5 * a.trace() * hyper.noise_variance;
    Ok((mll, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpFitConfig {
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub initial: GpHyper,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            restarts: 3,
            seed: 0,
            initial: GpHyper::default(),
        }
    }
}

/// Fitted GP: hyperparameters plus the data it conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub hyper: GpHyper,
    pub cond_tau: Vec<f64>,
    pub cond_x: Vec<f64>,
    /// Standardization `(mean, scale)` for mapping back to original units.
    pub transform: (f64, f64),
    pub last_month: i64,
}

#[derive(Debug, Clone)]
pub struct GpFit {
    pub model: GpModel,
    pub initial_mll: f64,
    pub final_mll: f64,
    /// Accepted MLL per iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// Fits hyperparameters on the series' fit window, then conditions on the
/// whole series.
pub fn fit_gp(series: &SeriesStd, cfg: &GpFitConfig) -> Result<GpFit> {
    let tau = series.fit_tau();
    let x = series.fit_x();
    if tau.len() < 24 {
        return Err(Error::Data(format!(
            "GP fit needs at least 24 points, got {}",
            tau.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, 0.5).expect("valid normal");
    let base = cfg.initial.to_vec();
    let mut best: Option<(f64, [f64; N_HYPER], Vec<f64>, f64)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut start = base;
        if restart > 0 {
            for (i, v) in start.iter_mut().enumerate() {
                // the period keeps its initial value up to a small wobble
                let scale = if i == 8 { 0.1 } else { 1.0 };
                *v += scale * jitter.sample(&mut rng);
            }
        }
        clamp(&mut start);
        let (theta, trace) = match ascend(start, tau, x, cfg.iterations) {
            Ok(r) => r,
            Err(e) if restart > 0 => {
                let _ = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mll = *trace.last().expect("trace holds the start value");
        if best.as_ref().is_none_or(|b| mll > b.0) {
            best = Some((mll, theta, trace.clone(), trace[0]));
        }
    }
    let (final_mll, theta, trace, initial_mll) = best.expect("first restart always recorded");
    Ok(GpFit {
        model: GpModel {
            hyper: GpHyper::from_vec(&theta),
            cond_tau: series.tau.clone(),
            cond_x: series.x.clone(),
            transform: (series.mean, series.scale),
            last_month: *series.months.last().unwrap_or(&0),
        },
        initial_mll,
        final_mll,
        trace,
    })
}

fn clamp(v: &mut [f64; N_HYPER]) {
    for (x, (lo, hi)) in v.iter_mut().zip(BOUNDS) {
        *x = x.clamp(lo, hi);
    }
}

/// Normalized-gradient ascent with step adaptation; a step is only accepted
/// when the likelihood does not drop, so the trace is non-decreasing.
fn ascend(
    mut theta: [f64; N_HYPER],
    tau: &[f64],
    x: &[f64],
    iterations: usize,
) -> Result<([f64; N_HYPER], Vec<f64>)> {
    let (mut mll, mut grad) = log_marginal_likelihood(&GpHyper::from_vec(&theta), tau, x)?;
    let mut trace = vec![mll];
    let mut step = 0.1;
    for _ in 0..iterations {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-9 || step < 1e-10 {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = theta;
            for (c, g) in cand.iter_mut().zip(&grad) {
                *c += step * g / gnorm;
            }
            clamp(&mut cand);
            match log_marginal_likelihood(&GpHyper::from_vec(&cand), tau, x) {
                Ok((m, g)) if m >= mll && m.is_finite() => {
                    theta = cand;
                    mll = m;
                    grad = g;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        trace.push(mll);
        if !accepted {
            break;
        }
    }
    Ok((theta, trace))
}

impl GpModel {
    /// A model with no conditioning data: predictions are the prior.
    pub fn prior(hyper: GpHyper, transform: (f64, f64), last_month: i64) -> Self {
        Self {
            hyper,
            cond_tau: Vec::new(),
            cond_x: Vec::new(),
            transform,
            last_month,
        }
    }

    pub fn last_tau(&self) -> f64 {
        self.cond_tau.last().copied().unwrap_or(0.0)
    }

    /// Posterior mean and covariance of the latent function at `tau`.
    pub fn predict(&self, tau: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let h = &self.hyper;
        let m = tau.len();
        let kss = h.kernel_matrix(tau);
        if self.cond_tau.is_empty() {
            return Ok((DVector::from_element(m, h.mean), kss));
        }
        let n = self.cond_tau.len();
        let mut k = h.kernel_matrix(&self.cond_tau);
        for i in 0..n {
            k[(i, i)] += h.noise_variance + JITTER;
        }
        let chol = factor(k, h)?;
        let ks = DMatrix::from_fn(n, m, |i, j| h.kernel(self.cond_tau[i], tau[j]));
        let resid = DVector::from_iterator(n, self.cond_x.iter().map(|v| v - h.mean));
        let alpha = chol.solve(&resid);
        let mean = ks.transpose() * alpha + DVector::from_element(m, h.mean);
        let v = chol.solve(&ks);
        let mut cov = kss - ks.transpose() * v;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean, cov))
    }

    /// Monthly grid continuing past the conditioning data.
    pub fn future_grid(&self, horizon: usize) -> Vec<f64> {
        let t0 = self.last_tau();
        (1..=horizon).map(|j| t0 + j as f64 / 12.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, SeriesRaw};
    use nalgebra::SymmetricEigen;
    use rand::Rng;

    #[test]
    fn gradient_matches_finite_difference() {
        let tau: Vec<f64> = (0..30).map(|i| i as f64 / 12.0).collect();
        let x: Vec<f64> = tau.iter().map(|t| (6.0 * t).sin() + 0.3 * t).collect();
        let h = GpHyper {
            mean: 0.1,
            rq_variance: 0.7,
            rq_lengthscale: 0.8,
            rq_alpha: 1.7,
            matern_variance: 0.2,
            matern_lengthscale: 0.4,
            periodic_variance: 0.5,
            periodic_lengthscale: 0.9,
            period: 1.1,
            noise_variance: 0.05,
        };
        let (_, g) = log_marginal_likelihood(&h, &tau, &x).unwrap();
        let base = h.to_vec();
        for i in 0..N_HYPER {
            let mut p = base;
            let mut m = base;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fp = log_marginal_likelihood(&GpHyper::from_vec(&p), &tau, &x).unwrap().0;
            let fm = log_marginal_likelihood(&GpHyper::from_vec(&m), &tau, &x).unwrap().0;
            let fd = (fp - fm) / 2e-6;
            assert!((g[i] - fd).abs() < 1e-4 * fd.abs().max(1.0), "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn kernel_psd_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(2..=96);
            let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..8.0)).collect();
            let mut k = GpHyper::default().kernel_matrix(&tau);
            for i in 0..n {
                k[(i, i)] += JITTER;
            }
            let min = SymmetricEigen::new(k).eigenvalues.min();
            assert!(min >= 0.0, "min eigenvalue {min}");
        }
    }

    fn series_from(values: Vec<f64>) -> SeriesStd {
        let n = values.len();
        standardize(&SeriesRaw::new("s", values), 0..n).unwrap()
    }

    #[test]
    fn recovers_annual_period() {
        let vals: Vec<f64> = (0..60)
            .map(|m| 100.0 * (1.0 + 0.5 * (2.0 * std::f64::consts::PI * m as f64 / 12.0).sin()))
            .collect();
        let fit = fit_gp(&series_from(vals), &GpFitConfig::default()).unwrap();
        let p = fit.model.hyper.period;
        assert!((p - 1.0).abs() <= 0.2, "period {p}");
        assert!(fit.final_mll >= fit.initial_mll);
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn white_noise_goes_to_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..60).map(|_| (5.0_f64 + 0.3 * n.sample(&mut rng)).exp()).collect();
        let s = series_from(vals);
        let fit = fit_gp(&s, &GpFitConfig::default()).unwrap();
        // standardized series has unit variance
        assert!(fit.model.hyper.noise_variance > 0.5, "{:?}", fit.model.hyper);
    }

    #[test]
    fn too_short() {
        let s = series_from((0..20).map(|v| v as f64 + 1.0).collect());
        assert!(fit_gp(&s, &GpFitConfig::default()).is_err());
    }

    #[test]
    fn prior_prediction() {
        let m = GpModel::prior(GpHyper::default(), (0.0, 1.0), 0);
        let (mean, cov) = m.predict(&[0.0, 0.5]).unwrap();
        assert_eq!(mean[0], 0.0);
        assert!((cov[(0, 0)] - GpHyper::default().kernel(0.0, 0.0)).abs() < 1e-15);
    }
}
