//! Amplitude encoding of real feature vectors, with fixed random projections
//! that lift a short vector to the `2^n` amplitudes of an `n`-qubit register.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::StateVector;

/// Prepares `sum_i x_i/|x| |i>`. Amplitudes are real.
pub fn amplitude_encode(vec: &[f64]) -> Result<StateVector> {
    let len = vec.len();
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    let norm = euclidean_norm(vec);
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if !norm.is_finite() {
        return Err(Error::Data("non-finite amplitude vector".into()));
    }
    let unit: Vec<f64> = vec.iter().map(|v| v / norm).collect();
    let state = StateVector::from_real_unchecked(&unit);
    if state.n_qubits() > crate::qsim::MAX_QUBITS {
        return Err(Error::TooManyQubits(state.n_qubits()));
    }
    Ok(state)
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pulls a gradient on the unit vector `psi = e / |e|` back to `e`:
/// `de = (dpsi - psi (psi . dpsi)) / |e|`.
pub fn normalize_backward(norm: f64, psi: &[f64], dpsi: &[f64]) -> Vec<f64> {
    let dot: f64 = psi.iter().zip(dpsi).map(|(p, d)| p * d).sum();
    psi.iter()
        .zip(dpsi)
        .map(|(p, d)| (d - p * dot) / norm)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiftKind {
    Identity,
    /// `[v, tanh(v)]`, doubling the width.
    #[default]
    TanhAffine,
}

impl LiftKind {
    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            LiftKind::Identity => input_dim,
            LiftKind::TanhAffine => 2 * input_dim,
        }
    }

    pub fn apply(self, v: &[f64]) -> Vec<f64> {
        match self {
            LiftKind::Identity => v.to_vec(),
            LiftKind::TanhAffine => v.iter().copied().chain(v.iter().map(|x| x.tanh())).collect(),
        }
    }
}

/// Fixed `2^n x d` matrix, row-major. Never trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomProjection {
    n_qubits: usize,
    input_dim: usize,
    seed: Option<u64>,
    matrix: Vec<f64>,
}

impl RandomProjection {
    /// Entries are i.i.d. `N(0, 1) / sqrt(input_dim)`, drawn row by row from
    /// a ChaCha8 stream seeded with `seed`.
    pub fn gaussian(n_qubits: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::qsim::MAX_QUBITS {
            return Err(Error::TooManyQubits(n_qubits));
        }
        if input_dim == 0 {
            return Err(Error::Config("projection input dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let matrix = (0..(1usize << n_qubits) * input_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(Self {
            n_qubits,
            input_dim,
            seed: Some(seed),
            matrix,
        })
    }

    pub fn from_matrix(n_qubits: usize, input_dim: usize, matrix: Vec<f64>) -> Result<Self> {
        let rows = 1usize << n_qubits;
        if matrix.len() != rows * input_dim {
            return Err(Error::Dimension {
                context: "projection matrix",
                expected: rows * input_dim,
                got: matrix.len(),
            });
        }
        Ok(Self {
            n_qubits,
            input_dim,
            seed: None,
            matrix,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.input_dim {
            return Err(Error::Dimension {
                context: "projection input",
                expected: self.input_dim,
                got: u.len(),
            });
        }
        Ok(self
            .matrix
            .chunks_exact(self.input_dim)
            .map(|row| row.iter().zip(u).map(|(p, x)| p * x).sum())
            .collect())
    }

    /// Frobenius distance to another projection of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// `P f_lift(v)`, left unnormalized; [`amplitude_encode`] normalizes once.
pub fn lift_and_project(vec: &[f64], proj: &RandomProjection, lift: LiftKind) -> Result<Vec<f64>> {
    let lifted = lift.apply(vec);
    if lifted.len() != proj.input_dim {
        return Err(Error::Dimension {
            context: "lifted vector vs projection",
            expected: proj.input_dim,
            got: lifted.len(),
        });
    }
    proj.apply(&lifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{expect_pauli, Pauli};
    use approx::assert_abs_diff_eq;

    #[test]
    fn basis_and_pythagorean_vectors() {
        let s = amplitude_encode(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s, StateVector::zero(2).unwrap());
        let s = amplitude_encode(&[3.0, 0.0, 0.0, 4.0]).unwrap();
        let re: Vec<f64> = s.amplitudes().iter().map(|a| a.re).collect();
        assert_eq!(re, vec![0.6, 0.0, 0.0, 0.8]);
        assert!(s.amplitudes().iter().all(|a| a.im == 0.0));
    }

    #[test]
    fn uniform_vector_is_plus_state() {
        let s = amplitude_encode(&[1.0; 4]).unwrap();
        for q in 0..2 {
            assert_abs_diff_eq!(expect_pauli(&s, Pauli::X, q).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_zero_and_bad_length() {
        assert!(matches!(amplitude_encode(&[0.0; 4]), Err(Error::ZeroVector)));
        assert!(matches!(amplitude_encode(&[1.0; 3]), Err(Error::NotPowerOfTwo(3))));
        assert!(matches!(amplitude_encode(&[]), Err(Error::NotPowerOfTwo(0))));
    }

    #[test]
    fn signed_amplitudes_allowed() {
        let s = amplitude_encode(&[-1.0, 1.0]).unwrap();
        assert!(s.amplitudes()[0].re < 0.0);
    }

    #[test]
    fn zero_vector_projects_to_zero() {
        let p = RandomProjection::gaussian(2, 4, 7).unwrap();
        let out = lift_and_project(&[0.0, 0.0], &p, LiftKind::TanhAffine).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn identity_projection_passes_through() {
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        let p = RandomProjection::from_matrix(2, 4, eye).unwrap();
        let v = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(lift_and_project(&v, &p, LiftKind::Identity).unwrap(), v.to_vec());
    }

    #[test]
    fn dimension_mismatch() {
        let p = RandomProjection::gaussian(2, 4, 1).unwrap();
        assert!(matches!(
            lift_and_project(&[1.0, 2.0, 3.0], &p, LiftKind::TanhAffine),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn normalize_backward_matches_finite_difference() {
        let e = [0.4, -1.2, 0.7, 0.1];
        let w = [1.0, 0.5, -2.0, 0.3];
        let f = |v: &[f64]| {
            let n = euclidean_norm(v);
            v.iter().zip(&w).map(|(x, w)| w * x / n).sum::<f64>()
        };
        let n = euclidean_norm(&e);
        let psi: Vec<f64> = e.iter().map(|x| x / n).collect();
        let g = normalize_backward(n, &psi, &w);
        for i in 0..4 {
            let mut p = e;
            let mut m = e;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            assert_abs_diff_eq!(g[i], (f(&p) - f(&m)) / 2e-6, epsilon = 1e-8);
        }
    }
}
