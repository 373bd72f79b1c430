use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoding::{amplitude_encode, euclidean_norm, normalize_backward};
use crate::error::{Error, Result};
use crate::qsim::{
    cnot_ring, expect_all, parameter_shift_grad, run_circuit, z_observable_input_grad, Angle, CircuitSpec, Gate,
    Pauli, StateVector,
};

use super::GateCell;

/// Layout of the per-gate variational circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnsatzStyle {
    /// Each layer: `H` then `RY(theta)` on every qubit, then the CNOT ring.
    #[default]
    HadamardRy,
    /// Each layer: a general `Rot` on every qubit, then the CNOT ring.
    AllRot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlstmConfig {
    pub n_qubits: usize,
    pub layers: usize,
    pub ansatz: AnsatzStyle,
    /// Standard deviation of the Gaussian `W_enc` initialization.
    pub encoder_std: f64,
}

impl Default for QlstmConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            layers: 2,
            ansatz: AnsatzStyle::HadamardRy,
            encoder_std: 0.1,
        }
    }
}

/// Builds the shared gate layout: `layers` entangling layers and a final `Rot` per qubit.
pub fn gate_circuit(n_qubits: usize, layers: usize, ansatz: AnsatzStyle) -> Result<CircuitSpec> {
    let mut gates = Vec::new();
    let mut slot = 0;
    let mut next = || {
        slot += 1;
        Angle::Slot(slot - 1)
    };
    for _ in 0..layers {
        for q in 0..n_qubits {
            match ansatz {
                AnsatzStyle::HadamardRy => {
                    gates.push(Gate::H(q));
                    gates.push(Gate::RY(q, next()));
                }
                AnsatzStyle::AllRot => gates.push(Gate::Rot(q, [next(), next(), next()])),
            }
        }
        gates.extend(cnot_ring(n_qubits));
    }
    for q in 0..n_qubits {
        gates.push(Gate::Rot(q, [next(), next(), next()]));
    }
    CircuitSpec::new(n_qubits, gates)
}

/// QLSTM cell. `e = W_enc v` is amplitude-encoded on `Q` qubits and fed to
/// four circuits of identical layout; the Z expectations of gate `k`'s
/// circuit are its pre-activations, so the hidden size equals `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QlstmCell {
    config: QlstmConfig,
    input: usize,
    /// Row-major `2^Q x (Q + input)`.
    encoder: Vec<f64>,
    circuit: CircuitSpec,
    thetas: [Vec<f64>; 4],
}

pub struct QlstmTape {
    v: Vec<f64>,
    norm: f64,
    psi: StateVector,
}

impl QlstmCell {
    /// Seeded initialization: `W_enc ~ N(0, encoder_std^2)`, angles uniform on `[0, 2pi)`.
    pub fn new(config: QlstmConfig, input: usize, seed: u64) -> Result<Self> {
        if input == 0 || config.n_qubits == 0 {
            return Err(Error::Config("QLSTM needs at least one qubit and one input".into()));
        }
        if !(config.encoder_std >= 0.0) {
            return Err(Error::Config("encoder_std must be non-negative".into()));
        }
        let circuit = gate_circuit(config.n_qubits, config.layers, config.ansatz)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.encoder_std).map_err(|e| Error::Config(e.to_string()))?;
        let rows = 1usize << config.n_qubits;
        let encoder = (0..rows * (config.n_qubits + input)).map(|_| normal.sample(&mut rng)).collect();
        let thetas = std::array::from_fn(|_| {
            (0..circuit.n_params())
                .map(|_| rng.random_range(0.0..2.0 * PI))
                .collect()
        });
        Ok(Self {
            config,
            input,
            encoder,
            circuit,
            thetas,
        })
    }

    pub fn config(&self) -> &QlstmConfig {
        &self.config
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    pub fn encoder(&self) -> &[f64] {
        &self.encoder
    }

    pub fn thetas(&self, gate: usize) -> &[f64] {
        &self.thetas[gate]
    }

    /// `e = W_enc v`.
    pub fn encode(&self, v: &[f64]) -> Vec<f64> {
        self.encoder
            .chunks_exact(v.len())
            .map(|row| row.iter().zip(v).map(|(w, x)| w * x).sum())
            .collect()
    }
}

impl GateCell for QlstmCell {
    type Tape = QlstmTape;

    fn hidden_size(&self) -> usize {
        self.config.n_qubits
    }

    fn input_size(&self) -> usize {
        self.input
    }

    fn n_params(&self) -> usize {
        self.encoder.len() + 4 * self.circuit.n_params()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.clone();
        for t in &self.thetas {
            p.extend_from_slice(t);
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
        let (enc, rest) = params.split_at(self.encoder.len());
        self.encoder.copy_from_slice(enc);
        for (t, chunk) in self.thetas.iter_mut().zip(rest.chunks_exact(self.circuit.n_params().max(1))) {
            t.copy_from_slice(chunk);
        }
        Ok(())
    }

    fn preactivations(&self, v: &[f64]) -> Result<([Vec<f64>; 4], QlstmTape)> {
        let e = self.encode(v);
        let psi = amplitude_encode(&e)?;
        let mut z: [Vec<f64>; 4] = Default::default();
        for (zk, theta) in z.iter_mut().zip(&self.thetas) {
            *zk = expect_all(&run_circuit(&psi, &self.circuit, theta)?, Pauli::Z);
        }
        let tape = QlstmTape {
            v: v.to_vec(),
            norm: euclidean_norm(&e),
            psi,
        };
        Ok((z, tape))
    }

    fn backward(&self, tape: &QlstmTape, da: &[Vec<f64>; 4], grad: &mut [f64]) -> Result<Vec<f64>> {
        let q = self.config.n_qubits;
        let observables: Vec<(Pauli, usize)> = (0..q).map(|j| (Pauli::Z, j)).collect();
        let np = self.circuit.n_params();
        let (g_enc, g_theta) = grad.split_at_mut(self.encoder.len());
        let mut dpsi = vec![0.0; tape.psi.dim()];
        for k in 0..4 {
            let gk = parameter_shift_grad(&self.circuit, &self.thetas[k], &tape.psi, &observables, &da[k])?;
            for (g, d) in g_theta[k * np..(k + 1) * np].iter_mut().zip(gk) {
                *g += d;
            }
            let dk = z_observable_input_grad(&self.circuit, &self.thetas[k], &tape.psi, &da[k])?;
            for (a, b) in dpsi.iter_mut().zip(dk) {
                *a += b;
            }
        }
        let psi_re: Vec<f64> = tape.psi.amplitudes().iter().map(|c| c.re).collect();
        let de = normalize_backward(tape.norm, &psi_re, &dpsi);
        let width = tape.v.len();
        let mut dv = vec![0.0; width];
        for (r, d) in de.iter().enumerate() {
            for c in 0..width {
                g_enc[r * width + c] += d * tape.v[c];
                dv[c] += d * self.encoder[r * width + c];
            }
        }
        Ok(dv)
    }
}
