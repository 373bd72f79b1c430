use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GateCell;

/// Classical LSTM cell. Gate `k` computes `a_k = W_k v + b_k` with `W_k`
/// stored row-major as `hidden x (hidden + input)`; gate order is f, i, c, o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    hidden: usize,
    input: usize,
    weights: [Vec<f64>; 4],
    biases: [Vec<f64>; 4],
}

impl LstmCell {
    pub fn zeros(hidden: usize, input: usize) -> Result<Self> {
        if hidden == 0 || input == 0 {
            return Err(Error::Config("LSTM hidden and input sizes must be positive".into()));
        }
        let w = hidden * (hidden + input);
        Ok(Self {
            hidden,
            input,
            weights: std::array::from_fn(|_| vec![0.0; w]),
            biases: std::array::from_fn(|_| vec![0.0; hidden]),
        })
    }

    /// Uniform `(-1/sqrt(H), 1/sqrt(H))` initialization of every weight and bias.
    pub fn random(hidden: usize, input: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut cell = Self::zeros(hidden, input)?;
        let bound = 1.0 / (hidden as f64).sqrt();
        for v in cell.weights.iter_mut().chain(cell.biases.iter_mut()) {
            for x in v.iter_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        Ok(cell)
    }

    pub fn weight(&self, gate: usize) -> &[f64] {
        &self.weights[gate]
    }

    pub fn bias(&self, gate: usize) -> &[f64] {
        &self.biases[gate]
    }

    fn width(&self) -> usize {
        self.hidden + self.input
    }
}

impl GateCell for LstmCell {
    type Tape = Vec<f64>;

    fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn input_size(&self) -> usize {
        self.input
    }

    fn n_params(&self) -> usize {
        4 * (self.hidden * self.width() + self.hidden)
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for k in 0..4 {
            p.extend_from_slice(&self.weights[k]);
            p.extend_from_slice(&self.biases[k]);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::ParamCount {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for k in 0..4 {
            let (w, tail) = rest.split_at(self.weights[k].len());
            let (b, tail) = tail.split_at(self.hidden);
            self.weights[k].copy_from_slice(w);
            self.biases[k].copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn preactivations(&self, v: &[f64]) -> Result<([Vec<f64>; 4], Vec<f64>)> {
        let width = self.width();
        let a = std::array::from_fn(|k| {
            self.weights[k]
                .chunks_exact(width)
                .zip(&self.biases[k])
                .map(|(row, b)| b + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>())
                .collect()
        });
        Ok((a, v.to_vec()))
    }

    fn backward(&self, v: &Vec<f64>, da: &[Vec<f64>; 4], grad: &mut [f64]) -> Result<Vec<f64>> {
        let width = self.width();
        let block = self.hidden * width + self.hidden;
        let mut dv = vec![0.0; width];
        for k in 0..4 {
            let g = &mut grad[k * block..(k + 1) * block];
            for r in 0..self.hidden {
                let d = da[k][r];
                g[self.hidden * width + r] += d;
                for c in 0..width {
                    g[r * width + c] += d * v[c];
                    dv[c] += d * self.weights[k][r * width + c];
                }
            }
        }
        Ok(dv)
    }
}
