use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsnParams {
    pub n_units: usize,
    pub spectral_radius: f64,
    /// Fraction of non-zero recurrent weights.
    pub density: f64,
    pub input_scale: f64,
    pub leak: f64,
    pub bias_range: f64,
    pub ridge: f64,
}

impl Default for EsnParams {
    fn default() -> Self {
        Self {
            n_units: 12,
            spectral_radius: 0.9,
            density: 0.5,
            input_scale: 1.0,
            leak: 0.5,
            bias_range: 0.1,
            ridge: 1e-2,
        }
    }
}

impl EsnParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::Config("ESN needs at least one unit".into()));
        }
        if !(0.0..=1.0).contains(&self.leak) || !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config("ESN leak and density must lie in [0, 1]".into()));
        }
        if !(self.ridge > 0.0) || !(self.spectral_radius >= 0.0) || !(self.bias_range >= 0.0) {
            return Err(Error::Config("ESN ridge must be positive, radius and bias range non-negative".into()));
        }
        Ok(())
    }
}

/// Leaky-tanh echo state network with fixed weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnConfig {
    pub params: EsnParams,
    pub seed: u64,
    input_dim: usize,
    /// Row-major `N x N`.
    w_res: Vec<f64>,
    /// Row-major `N x d`.
    w_in: Vec<f64>,
    bias: Vec<f64>,
}

/// Largest eigenvalue modulus of a square row-major matrix.
pub fn spectral_radius(n: usize, w: &[f64]) -> f64 {
    DMatrix::from_row_slice(n, n, w)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl EsnConfig {
    pub fn new(params: EsnParams, input_dim: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = params.n_units;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w_res: Vec<f64> = (0..n * n)
            .map(|_| {
                let keep = rng.random_bool(params.density);
                let w = rng.random_range(-1.0..1.0);
                if keep {
                    w
                } else {
                    0.0
                }
            })
            .collect();
        let rho = spectral_radius(n, &w_res);
        if rho > 0.0 {
            let s = params.spectral_radius / rho;
            w_res.iter_mut().for_each(|w| *w *= s);
        }
        let w_in = (0..n * input_dim)
            .map(|_| params.input_scale * rng.random_range(-1.0..1.0))
            .collect();
        let bias = (0..n)
            .map(|_| {
                if params.bias_range > 0.0 {
                    rng.random_range(-params.bias_range..params.bias_range)
                } else {
                    0.0
                }
            })
            .collect();
        Self::from_parts(params, input_dim, w_res, w_in, bias).map(|c| Self { seed, ..c })
    }

    /// Explicit weights; `params.n_units` and `input_dim` fix the shapes.
    pub fn from_parts(params: EsnParams, input_dim: usize, w_res: Vec<f64>, w_in: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        params.validate()?;
        let n = params.n_units;
        if input_dim == 0 || w_res.len() != n * n || w_in.len() != n * input_dim || bias.len() != n {
            return Err(Error::Dimension {
                context: "ESN weights",
                expected: n * n + n * input_dim + n,
                got: w_res.len() + w_in.len() + bias.len(),
            });
        }
        Ok(Self {
            params,
            seed: 0,
            input_dim,
            w_res,
            w_in,
            bias,
        })
    }

    pub fn n_units(&self) -> usize {
        self.params.n_units
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn w_res(&self) -> &[f64] {
        &self.w_res
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// `s = (1 - leak) prev + leak tanh(W_res prev + W_in x + b)`.
pub fn esn_step(cfg: &EsnConfig, prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = cfg.n_units();
    let d = cfg.input_dim;
    if prev.len() != n || x.len() != d {
        return Err(Error::Dimension {
            context: "ESN step",
            expected: n + d,
            got: prev.len() + x.len(),
        });
    }
    let leak = cfg.params.leak;
    Ok((0..n)
        .map(|i| {
            let rec: f64 = cfg.w_res[i * n..(i + 1) * n].iter().zip(prev).map(|(w, s)| w * s).sum();
            let inp: f64 = cfg.w_in[i * d..(i + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum();
            (1.0 - leak) * prev[i] + leak * (rec + inp + cfg.bias[i]).tanh()
        })
        .collect())
}
