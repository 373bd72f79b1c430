use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{amplitude_encode, lift_and_project, LiftKind, RandomProjection};
use crate::error::{Error, Result};
use crate::qsim::{cnot_ring, expect_all, run_circuit, Angle, CircuitSpec, Gate, Pauli};

/// User-facing knobs of the quantum reservoir; everything random is derived
/// from the seed passed to [`QrcConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrcParams {
    pub n_qubits: usize,
    pub layers: usize,
    pub leak: f64,
    /// Compression weights `(w_X, w_Y, w_Z)`.
    pub weights: [f64; 3],
    /// Biases are drawn from `Uniform(-bias_range, bias_range)`.
    pub bias_range: f64,
    pub ridge: f64,
    pub lift: LiftKind,
}

impl Default for QrcParams {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            layers: 3,
            leak: 0.5,
            weights: [1.0 / 3.0; 3],
            bias_range: 0.1,
            ridge: 1e-2,
            lift: LiftKind::TanhAffine,
        }
    }
}

impl QrcParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.leak) {
            return Err(Error::Config(format!("leak rate {} outside [0, 1]", self.leak)));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::Config("ridge regularizer must be positive".into()));
        }
        if self.n_qubits == 0 || !(self.bias_range >= 0.0) {
            return Err(Error::Config("need at least one qubit and a non-negative bias range".into()));
        }
        Ok(())
    }
}

/// Fully materialized quantum reservoir. Never changes after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrcConfig {
    pub params: QrcParams,
    pub seed: u64,
    input_dim: usize,
    bias: Vec<f64>,
    projection: RandomProjection,
    circuit: CircuitSpec,
}

impl QrcConfig {
    pub fn new(params: QrcParams, input_dim: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("reservoir input dimension must be positive".into()));
        }
        let n = params.n_qubits;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias = (0..n)
            .map(|_| {
                if params.bias_range > 0.0 {
                    rng.random_range(-params.bias_range..params.bias_range)
                } else {
                    0.0
                }
            })
            .collect();
        let mut gates = Vec::new();
        for _ in 0..params.layers {
            for q in 0..n {
                let a: [Angle; 3] = std::array::from_fn(|_| Angle::Fixed(rng.random_range(0.0..2.0 * PI)));
                gates.push(Gate::Rot(q, a));
            }
            gates.extend(cnot_ring(n));
        }
        let circuit = CircuitSpec::new(n, gates)?;
        let projection = RandomProjection::gaussian(n, params.lift.output_dim(n), rng.next_u64())?;
        Ok(Self {
            params,
            seed,
            input_dim,
            bias,
            projection,
            circuit,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.params.n_qubits
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn projection(&self) -> &RandomProjection {
        &self.projection
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    /// `v_i = leak (x_{i mod d} + b_i) + (1 - leak) m_i`, with `m_i` the
    /// weighted Pauli expectations of qubit `i` in `prev`.
    pub fn mix(&self, prev: &[f64], x: &[f64]) -> Vec<f64> {
        let [wx, wy, wz] = self.params.weights;
        let leak = self.params.leak;
        (0..self.n_qubits())
            .map(|i| {
                let m = wx * prev[3 * i] + wy * prev[3 * i + 1] + wz * prev[3 * i + 2];
                leak * (x[i % x.len()] + self.bias[i]) + (1.0 - leak) * m
            })
            .collect()
    }
}

/// One reservoir update. Returns `(<X_i>, <Y_i>, <Z_i>)` for each qubit `i`, interleaved.
pub fn qrc_step(cfg: &QrcConfig, prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = cfg.n_qubits();
    if prev.len() != 3 * n {
        return Err(Error::Dimension {
            context: "reservoir state",
            expected: 3 * n,
            got: prev.len(),
        });
    }
    if x.len() != cfg.input_dim {
        return Err(Error::Dimension {
            context: "reservoir input",
            expected: cfg.input_dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite reservoir input".into()));
    }
    let v = cfg.mix(prev, x);
    let u = lift_and_project(&v, &cfg.projection, cfg.params.lift)?;
    let psi = amplitude_encode(&u)?;
    let out = run_circuit(&psi, &cfg.circuit, &[])?;
    let ex = expect_all(&out, Pauli::X);
    let ey = expect_all(&out, Pauli::Y);
    let ez = expect_all(&out, Pauli::Z);
    Ok((0..n).flat_map(|i| [ex[i], ey[i], ez[i]]).collect())
}
