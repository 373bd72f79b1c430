use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Matrix, ReservoirTrace};

/// Ridge readout, `features x outputs`; predictions are `W_out^T r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WOut(pub Matrix);

impl WOut {
    pub fn features(&self) -> usize {
        self.0.rows
    }

    pub fn outputs(&self) -> usize {
        self.0.cols
    }
}

/// Solves `(R^T R + lambda I) W = R^T Y` as the least-squares problem
/// `[R; sqrt(lambda) I] W = [Y; 0]` through a QR factorization, which never
/// forms `R^T R` and so keeps the conditioning of `R` itself.
pub fn fit_ridge(trace: &ReservoirTrace, lambda: f64) -> Result<WOut> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("ridge regularizer must be positive, got {lambda}")));
    }
    let (r, y) = (&trace.r, &trace.y);
    if r.rows != y.rows {
        return Err(Error::Dimension {
            context: "ridge rows",
            expected: r.rows,
            got: y.rows,
        });
    }
    let (t, p, m) = (r.rows, r.cols, y.cols);
    if p == 0 || m == 0 {
        return Err(Error::Data("ridge regression needs features and targets".into()));
    }
    let sl = lambda.sqrt();
    let a = DMatrix::from_fn(t + p, p, |i, j| {
        if i < t {
            r.get(i, j)
        } else if i - t == j {
            sl
        } else {
            0.0
        }
    });
    let b = DMatrix::from_fn(t + p, m, |i, j| if i < t { y.get(i, j) } else { 0.0 });
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    let w = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::Solve("singular triangular factor in ridge regression"))?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve("non-finite ridge solution"));
    }
    Ok(WOut(Matrix::from_nalgebra(&w)))
}

/// `W_out^T r`.
pub fn predict_linear(w: &WOut, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != w.features() {
        return Err(Error::Dimension {
            context: "readout features",
            expected: w.features(),
            got: r.len(),
        });
    }
    Ok((0..w.outputs())
        .map(|o| r.iter().enumerate().map(|(k, x)| w.0.get(k, o) * x).sum())
        .collect())
}
