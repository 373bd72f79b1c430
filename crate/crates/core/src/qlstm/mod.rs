//! LSTM and QLSTM cells sharing one recurrence, readout and training loop.
//!
//! Both cells produce four gate pre-activations from `v_t = [h_{t-1}, x_t]`:
//! the classical cell with affine maps, the quantum cell with one variational
//! circuit per gate measured in Z. The recurrence on top is identical:
//!
//! ```text
//! f = σ(a_f)  i = σ(a_i)  g = tanh(a_c)  o = σ(a_o)
//! c_t = f·c_{t-1} + i·g   h_t = o·tanh(c_t)
//! ```

mod checkpoint;
mod lstm;
mod quantum;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LagDataset;
use crate::error::{Error, Result};
use crate::par::{sum_ordered, Execution};
use crate::train::{Optimizer, OptimizerConfig};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use lstm::LstmCell;
pub use quantum::{gate_circuit, AnsatzStyle, QlstmCell, QlstmConfig};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate pre-activation source for the shared recurrence.
pub trait GateCell: Clone + Send + Sync {
    /// Per-step cache kept for the backward pass.
    type Tape: Send + Sync;

    fn hidden_size(&self) -> usize;
    fn input_size(&self) -> usize;
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// `[a_f, a_i, a_c, a_o]` for `v = [h, x]`.
    fn preactivations(&self, v: &[f64]) -> Result<([Vec<f64>; 4], Self::Tape)>;

    /// Accumulates parameter gradients into `grad` and returns `dL/dv`.
    fn backward(&self, tape: &Self::Tape, da: &[Vec<f64>; 4], grad: &mut [f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activated gates of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
}

struct StepTape<T> {
    cell_tape: T,
    gates: Gates,
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

fn check_input<C: GateCell>(cell: &C, state: &RecurrentState, x: &[f64]) -> Result<()> {
    let h = cell.hidden_size();
    if state.h.len() != h || state.c.len() != h {
        return Err(Error::Dimension {
            context: "recurrent state",
            expected: h,
            got: state.h.len(),
        });
    }
    if x.len() != cell.input_size() {
        return Err(Error::Dimension {
            context: "cell input",
            expected: cell.input_size(),
            got: x.len(),
        });
    }
    Ok(())
}

fn step_taped<C: GateCell>(
    cell: &C,
    state: &RecurrentState,
    x: &[f64],
) -> Result<(RecurrentState, StepTape<C::Tape>)> {
    check_input(cell, state, x)?;
    let mut v = state.h.clone();
    v.extend_from_slice(x);
    let ([af, ai, ac, ao], cell_tape) = cell.preactivations(&v)?;
    let gates = Gates {
        f: af.iter().map(|&a| sigmoid(a)).collect(),
        i: ai.iter().map(|&a| sigmoid(a)).collect(),
        g: ac.iter().map(|a| a.tanh()).collect(),
        o: ao.iter().map(|&a| sigmoid(a)).collect(),
    };
    let c: Vec<f64> = (0..state.c.len())
        .map(|k| gates.f[k] * state.c[k] + gates.i[k] * gates.g[k])
        .collect();
    let h = c.iter().zip(&gates.o).map(|(c, o)| o * c.tanh()).collect();
    let next = RecurrentState { h, c: c.clone() };
    Ok((
        next,
        StepTape {
            cell_tape,
            gates,
            c_prev: state.c.clone(),
            c,
        },
    ))
}

/// One recurrence step; also returns the activated gates.
pub fn step_with_gates<C: GateCell>(cell: &C, state: &RecurrentState, x: &[f64]) -> Result<(RecurrentState, Gates)> {
    let (next, tape) = step_taped(cell, state, x)?;
    Ok((next, tape.gates))
}

pub fn lstm_step(cell: &LstmCell, state: &RecurrentState, x: &[f64]) -> Result<RecurrentState> {
    Ok(step_taped(cell, state, x)?.0)
}

pub fn qlstm_step(cell: &QlstmCell, state: &RecurrentState, x: &[f64]) -> Result<RecurrentState> {
    Ok(step_taped(cell, state, x)?.0)
}

/// Runs a sequence from the zero state. Errors carry the failing step index.
pub fn run_sequence<C: GateCell>(cell: &C, seq: &[Vec<f64>]) -> Result<RecurrentState> {
    if seq.is_empty() {
        return Err(Error::Data("empty input sequence".into()));
    }
    let mut s = RecurrentState::zeros(cell.hidden_size());
    for (t, x) in seq.iter().enumerate() {
        s = step_taped(cell, &s, x).map_err(|e| Error::at_step(t, e))?.0;
    }
    Ok(s)
}

/// Linear map `y = W h + b` from the final hidden state to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub outputs: usize,
    pub hidden: usize,
    /// Row-major `outputs x hidden`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Readout {
    pub fn zeros(hidden: usize, outputs: usize) -> Self {
        Self {
            outputs,
            hidden,
            weight: vec![0.0; outputs * hidden],
            bias: vec![0.0; outputs],
        }
    }

    pub fn random(hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut r = Self::zeros(hidden, outputs);
        for w in r.weight.iter_mut().chain(r.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        r
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.hidden)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// A gate cell plus its readout; the unit that is trained and checkpointed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceModel<C> {
    pub cell: C,
    pub readout: Readout,
}

pub type LstmModel = SequenceModel<LstmCell>;
pub type QlstmModel = SequenceModel<QlstmCell>;

impl<C: GateCell> SequenceModel<C> {
    pub fn new(cell: C, readout: Readout) -> Result<Self> {
        if readout.hidden != cell.hidden_size() {
            return Err(Error::Dimension {
                context: "readout width",
                expected: cell.hidden_size(),
                got: readout.hidden,
            });
        }
        Ok(Self { cell, readout })
    }

    pub fn n_params(&self) -> usize {
        self.cell.n_params() + self.readout.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.cell.params();
        p.extend_from_slice(&self.readout.weight);
        p.extend_from_slice(&self.readout.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::ParamCount {
                expected: self.n_params(),
                got: p.len(),
            });
        }
        let nc = self.cell.n_params();
        let nw = self.readout.weight.len();
        self.cell.set_params(&p[..nc])?;
        self.readout.weight.copy_from_slice(&p[nc..nc + nw]);
        self.readout.bias.copy_from_slice(&p[nc + nw..]);
        Ok(())
    }

    pub fn forecast_window(&self, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.readout.apply(&run_sequence(&self.cell, seq)?.h))
    }

    /// Predictions for each row, each row consumed as a `lag`-step sequence.
    /// Row-major `rows x outputs`.
    pub fn forecast_sequence(&self, data: &LagDataset, rows: std::ops::Range<usize>, exec: Execution) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Err(Error::Data("no windows to forecast".into()));
        }
        let idx: Vec<usize> = rows.collect();
        let preds = exec.map(&idx, |&i| {
            self.forecast_window(&data.sequence(i))
                .map_err(|e| Error::Data(format!("window {i}: {e}")))
        });
        Ok(preds.into_iter().collect::<Result<Vec<_>>>()?.concat())
    }

    /// Squared error of one window and its gradient, scaled by `weight`
    /// (loss contribution `weight * sum_j (y_hat_j - y_j)^2`).
    pub fn window_loss_grad(&self, seq: &[Vec<f64>], target: &[f64], weight: f64) -> Result<(f64, Vec<f64>)> {
        if seq.is_empty() {
            return Err(Error::Data("empty input sequence".into()));
        }
        if target.len() != self.readout.outputs {
            return Err(Error::Dimension {
                context: "target width",
                expected: self.readout.outputs,
                got: target.len(),
            });
        }
        let hsz = self.cell.hidden_size();
        let mut state = RecurrentState::zeros(hsz);
        let mut tapes = Vec::with_capacity(seq.len());
        for (t, x) in seq.iter().enumerate() {
            let (next, tape) = step_taped(&self.cell, &state, x).map_err(|e| Error::at_step(t, e))?;
            tapes.push(tape);
            state = next;
        }
        let pred = self.readout.apply(&state.h);
        let resid: Vec<f64> = pred.iter().zip(target).map(|(p, y)| p - y).collect();
        let sq: f64 = resid.iter().map(|r| r * r).sum();

        let nc = self.cell.n_params();
        let mut grad = vec![0.0; self.n_params()];
        let dy: Vec<f64> = resid.iter().map(|r| 2.0 * weight * r).collect();
        let mut dh = vec![0.0; hsz];
        {
            let (gw, gb) = grad[nc..].split_at_mut(self.readout.weight.len());
            for (o, d) in dy.iter().enumerate() {
                gb[o] += d;
                for k in 0..hsz {
                    gw[o * hsz + k] += d * state.h[k];
                    dh[k] += d * self.readout.weight[o * hsz + k];
                }
            }
        }
        let mut dc = vec![0.0; hsz];
        for tape in tapes.iter().rev() {
            let g = &tape.gates;
            let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hsz]);
            let mut dc_prev = vec![0.0; hsz];
            for k in 0..hsz {
                let tc = tape.c[k].tanh();
                let d_o = dh[k] * tc;
                let dck = dc[k] + dh[k] * g.o[k] * (1.0 - tc * tc);
                let d_f = dck * tape.c_prev[k];
                let d_i = dck * g.g[k];
                let d_g = dck * g.i[k];
                dc_prev[k] = dck * g.f[k];
                da[0][k] = d_f * g.f[k] * (1.0 - g.f[k]);
                da[1][k] = d_i * g.i[k] * (1.0 - g.i[k]);
                da[2][k] = d_g * (1.0 - g.g[k] * g.g[k]);
                da[3][k] = d_o * g.o[k] * (1.0 - g.o[k]);
            }
            let dv = self.cell.backward(&tape.cell_tape, &da, &mut grad[..nc])?;
            dh = dv[..hsz].to_vec();
            dc = dc_prev;
        }
        Ok((weight * sq, grad))
    }

    /// Mean squared error over `rows` (all outputs pooled) and its gradient.
    pub fn batch_loss_grad(&self, data: &LagDataset, rows: &[usize], exec: Execution) -> Result<(f64, Vec<f64>)> {
        if rows.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let w = 1.0 / (rows.len() * self.readout.outputs) as f64;
        let parts = exec.map(rows, |&i| self.window_loss_grad(&data.sequence(i), data.target(i), w));
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(parts.len());
        for p in parts {
            let (l, g) = p?;
            loss += l;
            grads.push(g);
        }
        Ok((loss, sum_ordered(grads, self.n_params())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training MSE seen during each epoch.
    pub loss_curve: Vec<f64>,
}

/// Mini-batch training on the dataset's training rows; one Adam/SGD step per batch.
pub fn train_model<C: GateCell>(
    model: &mut SequenceModel<C>,
    data: &LagDataset,
    opt: &OptimizerConfig,
    exec: Execution,
) -> Result<TrainReport> {
    let train: Vec<usize> = data.train_rows().collect();
    if train.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    if opt.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if !(opt.learning_rate >= 0.0) {
        return Err(Error::Config("learning rate must be non-negative".into()));
    }
    let batch = if opt.batch_size == 0 { train.len() } else { opt.batch_size };
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut optimizer = Optimizer::new(opt.clone(), model.n_params());
    let mut params = model.params();
    let mut order = train.clone();
    let mut curve = Vec::with_capacity(opt.epochs);
    for epoch in 0..opt.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = model.batch_loss_grad(data, chunk, exec)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch });
            }
            weighted += loss * chunk.len() as f64;
            optimizer.step(&mut params, &grad).map_err(|e| match e {
                Error::NonFiniteGradient => Error::NanLoss { epoch },
                other => other,
            })?;
            model.set_params(&params)?;
        }
        curve.push(weighted / train.len() as f64);
    }
    Ok(TrainReport { loss_curve: curve })
}

/// Trains a QLSTM; circuit gradients come from the parameter-shift rule.
pub fn train_qlstm(model: &mut QlstmModel, data: &LagDataset, opt: &OptimizerConfig, exec: Execution) -> Result<TrainReport> {
    train_model(model, data, opt, exec)
}

pub fn train_lstm(model: &mut LstmModel, data: &LagDataset, opt: &OptimizerConfig, exec: Execution) -> Result<TrainReport> {
    train_model(model, data, opt, exec)
}

/// Parameter count of an LSTM with readout.
pub fn lstm_param_count(hidden: usize, input: usize, outputs: usize) -> usize {
    4 * (hidden * (hidden + input) + hidden) + hidden * outputs + outputs
}

/// Hidden size whose LSTM parameter count is relatively closest to `target`.
pub fn matched_lstm_hidden(target: usize, input: usize, outputs: usize) -> usize {
    (1..=256)
        .min_by(|&a, &b| {
            let gap = |h: usize| {
                let n = lstm_param_count(h, input, outputs) as f64;
                (target as f64 - n).abs() / n
            };
            gap(a).total_cmp(&gap(b))
        })
        .expect("non-empty range")
}

/// `|quantum - classical| / classical`.
pub fn param_gap(quantum: usize, classical: usize) -> f64 {
    (quantum as f64 - classical as f64).abs() / classical as f64
}

#[cfg(test)]
mod tests;
