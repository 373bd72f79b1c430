//! Fixed random reservoirs (quantum and echo-state) with trained readouts.
//!
//! A reservoir is driven step by step; its states are stacked into a trace
//! `R` and only the readout on top of `R` is fitted. The readout is ridge
//! regression, optionally followed by a small MLP that refines the ridge
//! predictions.

mod esn;
mod mlp;
mod qrc;
mod ridge;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::LagDataset;
use crate::error::{Error, Result};

pub use esn::{esn_step, spectral_radius, EsnConfig, EsnParams};
pub use mlp::{fit_nn_readout, Mlp, MlpConfig};
pub use qrc::{qrc_step, QrcConfig, QrcParams};
pub use ridge::{fit_ridge, predict_linear, WOut};

/// Steps excluded from readout fitting while the reservoir forgets `r^(0)`.
pub const WASHOUT: usize = 5;

/// A fixed dynamical system driven by one input vector per step.
pub trait Reservoir {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, prev: &[f64], x: &[f64]) -> Result<Vec<f64>>;
}

impl Reservoir for QrcConfig {
    fn state_dim(&self) -> usize {
        3 * self.n_qubits()
    }

    fn input_dim(&self) -> usize {
        QrcConfig::input_dim(self)
    }

    fn step(&self, prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        qrc_step(self, prev, x)
    }
}

impl Reservoir for EsnConfig {
    fn state_dim(&self) -> usize {
        self.n_units()
    }

    fn input_dim(&self) -> usize {
        EsnConfig::input_dim(self)
    }

    fn step(&self, prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        esn_step(self, prev, x)
    }
}

/// Row-major `rows x cols` real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Data("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }
}

/// Stacked reservoir states with their aligned targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirTrace {
    pub r: Matrix,
    pub y: Matrix,
}

impl ReservoirTrace {
    pub fn new(r: Matrix, y: Matrix) -> Result<Self> {
        if r.rows != y.rows {
            return Err(Error::Dimension {
                context: "trace rows vs target rows",
                expected: r.rows,
                got: y.rows,
            });
        }
        Ok(Self { r, y })
    }

    /// CSV with header `t,r_1..r_p,y_1..y_m`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for j in 1..=self.r.cols {
            let _ = write!(s, ",r_{j}");
        }
        for j in 1..=self.y.cols {
            let _ = write!(s, ",y_{j}");
        }
        s.push('\n');
        for t in 0..self.r.rows {
            let _ = write!(s, "{t}");
            for v in self.r.row(t).iter().chain(self.y.row(t)) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Runs from `r^(0) = 0` and returns the `T x state_dim` state matrix.
pub fn run_reservoir<R: Reservoir + ?Sized>(res: &R, inputs: &[Vec<f64>]) -> Result<Matrix> {
    run_reservoir_from(res, &vec![0.0; res.state_dim()], inputs)
}

pub fn run_reservoir_from<R: Reservoir + ?Sized>(res: &R, initial: &[f64], inputs: &[Vec<f64>]) -> Result<Matrix> {
    if inputs.is_empty() {
        return Err(Error::Data("reservoir needs at least one input step".into()));
    }
    if initial.len() != res.state_dim() {
        return Err(Error::Dimension {
            context: "initial reservoir state",
            expected: res.state_dim(),
            got: initial.len(),
        });
    }
    let mut out = Matrix::zeros(inputs.len(), res.state_dim());
    let mut prev = initial.to_vec();
    for (t, x) in inputs.iter().enumerate() {
        prev = res.step(&prev, x).map_err(|e| Error::at_step(t, e))?;
        out.data[t * out.cols..(t + 1) * out.cols].copy_from_slice(&prev);
    }
    Ok(out)
}

/// Distance `|r_a(t) - r_b(t)|` per step between a run from zero and a run
/// from `initial`, driven by the same inputs.
pub fn fading_memory(res: &(impl Reservoir + ?Sized), initial: &[f64], inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let a = run_reservoir(res, inputs)?;
    let b = run_reservoir_from(res, initial, inputs)?;
    Ok((0..a.rows)
        .map(|t| {
            a.row(t)
                .iter()
                .zip(b.row(t))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Reservoir state aligned to each lag row: the reservoir is driven through
/// the dataset's stream continuously and row `i` takes the state after the
/// step that ends that row's window.
pub fn reservoir_features<R: Reservoir + ?Sized>(res: &R, data: &LagDataset) -> Result<Matrix> {
    let states = run_reservoir(res, &data.stream())?;
    let offset = data.lag() - 1;
    let mut out = Matrix::zeros(data.rows(), states.cols);
    for i in 0..data.rows() {
        out.data[i * states.cols..(i + 1) * states.cols].copy_from_slice(states.row(i + offset));
    }
    Ok(out)
}

/// Appends a constant-one column.
pub fn with_intercept(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols + 1);
    for i in 0..m.rows {
        out.data[i * out.cols..i * out.cols + m.cols].copy_from_slice(m.row(i));
        out.data[i * out.cols + m.cols] = 1.0;
    }
    out
}

/// Rows `range` of `m`.
pub fn slice_rows(m: &Matrix, range: std::ops::Range<usize>) -> Matrix {
    Matrix {
        rows: range.len(),
        cols: m.cols,
        data: m.data[range.start * m.cols..range.end * m.cols].to_vec(),
    }
}
