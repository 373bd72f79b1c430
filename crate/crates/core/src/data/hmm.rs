//! Two-state HMM with Gaussian emissions sharing one variance; the state
//! means are the level offsets added to the GP component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-8;

/// Log-likelihood, smoothed state posteriors, expected transition counts and
/// the filtered state distribution at the last step.
type ForwardBackward = (f64, Vec<[f64; 2]>, [[f64; 2]; 2], [f64; 2]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hmm2 {
    /// Row-stochastic; `transition[i][j] = P(s_t = j | s_{t-1} = i)`.
    pub transition: [[f64; 2]; 2],
    pub offsets: [f64; 2],
    pub variance: f64,
    pub initial: [f64; 2],
    /// Distribution of the state one step past the last conditioned observation.
    pub start: [f64; 2],
    /// Set when EM collapsed onto one state and the single-offset fallback was used.
    pub collapsed: bool,
}

impl Hmm2 {
    pub fn new(transition: [[f64; 2]; 2], offsets: [f64; 2], variance: f64, initial: [f64; 2]) -> Result<Self> {
        for row in &transition {
            if (row[0] + row[1] - 1.0).abs() > 1e-12 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::Config(format!("transition row {row:?} is not stochastic")));
            }
        }
        if !offsets.iter().all(|o| o.is_finite()) || !(variance > 0.0) {
            return Err(Error::Config("offsets must be finite and variance positive".into()));
        }
        Ok(Self {
            transition,
            offsets,
            variance,
            initial,
            start: initial,
            collapsed: false,
        })
    }

    /// One state, offset `offset`, noise variance `variance`.
    pub fn single(offset: f64, variance: f64) -> Self {
        Self {
            transition: [[1.0, 0.0], [0.0, 1.0]],
            offsets: [offset, offset],
            variance,
            initial: [1.0, 0.0],
            start: [1.0, 0.0],
            collapsed: false,
        }
    }

    fn emission(&self, state: usize, obs: f64) -> f64 {
        let d = obs - self.offsets[state];
        (-0.5 * d * d / self.variance).exp() / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }

    /// Scaled forward-backward. Returns the log-likelihood, state posteriors
    /// and expected transition counts.
    fn forward_backward(&self, obs: &[f64]) -> ForwardBackward {
        let t_len = obs.len();
        let mut alpha = vec![[0.0; 2]; t_len];
        let mut scale = vec![0.0; t_len];
        for t in 0..t_len {
            for j in 0..2 {
                let prior = if t == 0 {
                    self.initial[j]
                } else {
                    alpha[t - 1][0] * self.transition[0][j] + alpha[t - 1][1] * self.transition[1][j]
                };
                alpha[t][j] = prior * self.emission(j, obs[t]);
            }
            let c = (alpha[t][0] + alpha[t][1]).max(f64::MIN_POSITIVE);
            scale[t] = c;
            alpha[t][0] /= c;
            alpha[t][1] /= c;
        }
        let mut beta = vec![[1.0; 2]; t_len];
        for t in (0..t_len.saturating_sub(1)).rev() {
            for i in 0..2 {
                beta[t][i] = (0..2)
                    .map(|j| self.transition[i][j] * self.emission(j, obs[t + 1]) * beta[t + 1][j])
                    .sum::<f64>()
                    / scale[t + 1];
            }
        }
        let gamma: Vec<[f64; 2]> = (0..t_len)
            .map(|t| {
                let g = [alpha[t][0] * beta[t][0], alpha[t][1] * beta[t][1]];
                let s = g[0] + g[1];
                [g[0] / s, g[1] / s]
            })
            .collect();
        let mut xi = [[0.0; 2]; 2];
        for t in 0..t_len.saturating_sub(1) {
            for i in 0..2 {
                for j in 0..2 {
                    xi[i][j] += alpha[t][i]
                        * self.transition[i][j]
                        * self.emission(j, obs[t + 1])
                        * beta[t + 1][j]
                        / scale[t + 1];
                }
            }
        }
        let ll = scale.iter().map(|c| c.ln()).sum();
        let last = alpha.last().copied().unwrap_or(self.initial);
        (ll, gamma, xi, last)
    }

    pub fn log_likelihood(&self, obs: &[f64]) -> f64 {
        self.forward_backward(obs).0
    }

    /// Smoothed posterior `P(s_t | all observations)`.
    pub fn posterior(&self, obs: &[f64]) -> Vec<[f64; 2]> {
        self.forward_backward(obs).1
    }

    /// Sets `start` to the predicted state distribution after `obs`.
    pub fn condition_on(&mut self, obs: &[f64]) {
        if obs.is_empty() {
            self.start = self.initial;
            return;
        }
        let last = self.forward_backward(obs).3;
        self.start = self.propagate(last);
    }

    pub fn propagate(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.transition[0][0] + p[1] * self.transition[1][0],
            p[0] * self.transition[0][1] + p[1] * self.transition[1][1],
        ]
    }

    /// Expected offset at each of the next `horizon` steps, starting from `start`.
    pub fn expected_offsets(&self, horizon: usize) -> Vec<f64> {
        let mut p = self.start;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            out.push(p[0] * self.offsets[0] + p[1] * self.offsets[1]);
            p = self.propagate(p);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HmmFit {
    pub hmm: Hmm2,
    /// Log-likelihood before each EM update, then after the last one.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

/// Baum-Welch EM. Initial offsets sit at the lower and upper quartiles.
pub fn fit_hmm(residuals: &[f64], cfg: &HmmConfig) -> Result<HmmFit> {
    if residuals.len() < 10 {
        return Err(Error::Data(format!(
            "HMM fit needs at least 10 residuals, got {}",
            residuals.len()
        )));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::Data("non-finite residual".into()));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = (residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).max(VAR_FLOOR);
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];

    let mut hmm = Hmm2 {
        transition: [[0.9, 0.1], [0.1, 0.9]],
        offsets: [q(0.25), q(0.75)],
        variance: var,
        initial: [0.5, 0.5],
        start: [0.5, 0.5],
        collapsed: false,
    };
    if hmm.offsets[0] == hmm.offsets[1] {
        hmm.offsets = [mean - 0.5 * var.sqrt(), mean + 0.5 * var.sqrt()];
    }

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let (ll, gamma, xi, _) = hmm.forward_backward(residuals);
        if let Some(&prev) = trace.last() {
            if ll - prev < cfg.tolerance {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        let occupancy = [
            gamma.iter().map(|g| g[0]).sum::<f64>(),
            gamma.iter().map(|g| g[1]).sum::<f64>(),
        ];
        if occupancy.iter().any(|&o| o < 1.0) {
            let mut single = Hmm2::single(mean, var);
            single.collapsed = true;
            single.condition_on(residuals);
            return Ok(HmmFit {
                loglik_trace: trace,
                hmm: single,
                converged: false,
            });
        }
        for i in 0..2 {
            let row = xi[i][0] + xi[i][1];
            if row > 0.0 {
                hmm.transition[i] = [xi[i][0] / row, xi[i][1] / row];
            }
            hmm.offsets[i] =
                gamma.iter().zip(residuals).map(|(g, r)| g[i] * r).sum::<f64>() / occupancy[i];
        }
        hmm.variance = (gamma
            .iter()
            .zip(residuals)
            .map(|(g, r)| {
                g[0] * (r - hmm.offsets[0]).powi(2) + g[1] * (r - hmm.offsets[1]).powi(2)
            })
            .sum::<f64>()
            / n)
            .max(VAR_FLOOR);
        hmm.initial = gamma[0];
    }
    if !converged {
        trace.push(hmm.log_likelihood(residuals));
    }
    hmm.condition_on(residuals);
    Ok(HmmFit {
        hmm,
        loglik_trace: trace,
        converged,
    })
}
