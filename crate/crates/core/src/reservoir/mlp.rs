use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{Optimizer, OptimizerConfig};

use super::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            optimizer: OptimizerConfig {
                epochs: 300,
                batch_size: 0,
                ..OptimizerConfig::default()
            },
        }
    }
}

/// `y = W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            inputs,
            hidden,
            outputs,
            params: vec![0.0; hidden * inputs + hidden + outputs * hidden + outputs],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(inputs, hidden, outputs);
        let a1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + outputs) as f64).sqrt();
        let (w1, rest) = m.params.split_at_mut(hidden * inputs);
        w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        rest[hidden..hidden + outputs * hidden]
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a2..a2));
        m
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::ParamCount {
                expected: self.params.len(),
                got: p.len(),
            });
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        (b1, w2, w2 + self.outputs * self.hidden)
    }

    fn hidden_act(&self, x: &[f64]) -> Vec<f64> {
        let (b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * self.inputs..(j + 1) * self.inputs];
                (self.params[b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::Dimension {
                context: "MLP input",
                expected: self.inputs,
                got: x.len(),
            });
        }
        let (_, w2, b2) = self.offsets();
        let a = self.hidden_act(x);
        Ok((0..self.outputs)
            .map(|o| {
                let row = &self.params[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
                self.params[b2 + o] + row.iter().zip(&a).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect())
    }

    /// Mean squared error over the selected rows (all outputs pooled) and its gradient.
    pub fn loss_grad(&self, x: &Matrix, y: &Matrix, rows: &[usize]) -> Result<(f64, Vec<f64>)> {
        if x.cols != self.inputs || y.cols != self.outputs || x.rows != y.rows {
            return Err(Error::Dimension {
                context: "MLP training data",
                expected: self.inputs + self.outputs,
                got: x.cols + y.cols,
            });
        }
        let (b1, w2, b2) = self.offsets();
        let scale = 1.0 / (rows.len() * self.outputs) as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for &i in rows {
            let xi = x.row(i);
            let a = self.hidden_act(xi);
            let pred = self.forward(xi)?;
            let mut da = vec![0.0; self.hidden];
            for o in 0..self.outputs {
                let r = pred[o] - y.get(i, o);
                loss += scale * r * r;
                let d = 2.0 * scale * r;
                grad[b2 + o] += d;
                for j in 0..self.hidden {
                    grad[w2 + o * self.hidden + j] += d * a[j];
                    da[j] += d * self.params[w2 + o * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                let dz = da[j] * (1.0 - a[j] * a[j]);
                grad[b1 + j] += dz;
                for k in 0..self.inputs {
                    grad[j * self.inputs + k] += dz * xi[k];
                }
            }
        }
        Ok((loss, grad))
    }
}

/// Trains `mlp` in place to map `inputs` (ridge predictions) to `targets`.
/// Returns the per-epoch training loss.
pub fn fit_nn_readout(mlp: &mut Mlp, inputs: &Matrix, targets: &Matrix, cfg: &MlpConfig) -> Result<Vec<f64>> {
    if inputs.rows == 0 || inputs.rows != targets.rows {
        return Err(Error::Data("NN readout needs non-empty paired data".into()));
    }
    let opt = &cfg.optimizer;
    if opt.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..inputs.rows).collect();
    let batch = if opt.batch_size == 0 { order.len() } else { opt.batch_size };
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut optimizer = Optimizer::new(opt.clone(), mlp.n_params());
    let mut params = mlp.params.clone();
    let mut curve = Vec::with_capacity(opt.epochs);
    for epoch in 0..opt.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = mlp.loss_grad(inputs, targets, chunk)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch });
            }
            weighted += loss * chunk.len() as f64;
            optimizer.step(&mut params, &grad).map_err(|e| match e {
                Error::NonFiniteGradient => Error::NanLoss { epoch },
                other => other,
            })?;
            mlp.params.copy_from_slice(&params);
        }
        curve.push(weighted / inputs.rows as f64);
    }
    Ok(curve)
}
