//! Dense statevector simulator.
//!
//! Qubit 0 is the most significant bit of the basis index, so `|q0 q1 ... q(n-1)>`
//! maps to the integer `q0 * 2^(n-1) + ... + q(n-1)`. Rotations follow
//! `R_A(theta) = exp(-i theta A / 2)` and `Rot(a, b, c) = RZ(c) RY(b) RZ(a)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;

pub const MAX_QUBITS: usize = 14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub type Matrix2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_width(n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero(n_qubits)?;
        if index >= s.amps.len() {
            return Err(Error::Dimension {
                context: "basis index",
                expected: s.amps.len(),
                got: index,
            });
        }
        s.amps[0] = ZERO;
        s.amps[index] = ONE;
        Ok(s)
    }

    /// Wraps raw amplitudes. The vector must have power-of-two length and unit norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_width(n_qubits)?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Data(format!("state norm {norm} is not 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    pub(crate) fn from_real_unchecked(values: &[f64]) -> Self {
        let n_qubits = values.len().trailing_zeros() as usize;
        Self {
            n_qubits,
            amps: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            Err(Error::QubitOutOfRange {
                index: qubit,
                n_qubits: self.n_qubits,
            })
        } else {
            Ok(())
        }
    }

    fn apply_single(&mut self, qubit: usize, m: &Matrix2) {
        let mask = self.mask(qubit);
        let dim = self.amps.len();
        let mut i = 0;
        while i < dim {
            if i & mask != 0 {
                i += mask;
                continue;
            }
            let j = i | mask;
            let a = self.amps[i];
            let b = self.amps[j];
            self.amps[i] = m[0][0] * a + m[0][1] * b;
            self.amps[j] = m[1][0] * a + m[1][1] * b;
            i += 1;
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    fn apply_op(&mut self, op: &Op) {
        match op {
            Op::Single { qubit, m } => self.apply_single(*qubit, m),
            Op::Cnot { control, target } => self.apply_cnot(*control, *target),
        }
    }

    fn apply_op_adjoint(&mut self, op: &Op) {
        match op {
            Op::Single { qubit, m } => self.apply_single(*qubit, &adjoint(m)),
            Op::Cnot { control, target } => self.apply_cnot(*control, *target),
        }
    }
}

fn check_width(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(Error::Config("register needs at least one qubit".into()));
    }
    if n_qubits > MAX_QUBITS {
        return Err(Error::TooManyQubits(n_qubits));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// A gate angle: either a constant or a reference to a trainable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    Slot(usize),
}

impl Angle {
    fn resolve(self, params: &[f64]) -> f64 {
        match self {
            Angle::Fixed(v) => v,
            Angle::Slot(k) => params[k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    H(usize),
    RX(usize, Angle),
    RY(usize, Angle),
    RZ(usize, Angle),
    /// `RZ(gamma) RY(beta) RZ(alpha)` with angles `[alpha, beta, gamma]`.
    Rot(usize, [Angle; 3]),
    Cnot { control: usize, target: usize },
}

impl Gate {
    fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::H(q) | Gate::RX(q, _) | Gate::RY(q, _) | Gate::RZ(q, _) | Gate::Rot(q, _) => {
                (q, None)
            }
            Gate::Cnot { control, target } => (control, Some(target)),
        }
    }

    fn angles(&self) -> Vec<Angle> {
        match *self {
            Gate::RX(_, a) | Gate::RY(_, a) | Gate::RZ(_, a) => vec![a],
            Gate::Rot(_, a) => a.to_vec(),
            _ => Vec::new(),
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let (a, b) = self.qubits();
        for q in std::iter::once(a).chain(b) {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
        }
        if let Some(t) = b {
            if t == a {
                return Err(Error::ControlIsTarget(a));
            }
        }
        Ok(())
    }

    /// Expand into elementary ops; `Rot` becomes three axis rotations.
    fn lower(&self, params: &[f64], out: &mut Vec<Op>) {
        let single = |qubit, m| Op::Single { qubit, m };
        match *self {
            Gate::H(q) => out.push(single(q, hadamard())),
            Gate::RX(q, a) => out.push(single(q, rx(a.resolve(params)))),
            Gate::RY(q, a) => out.push(single(q, ry(a.resolve(params)))),
            Gate::RZ(q, a) => out.push(single(q, rz(a.resolve(params)))),
            Gate::Rot(q, [a, b, c]) => {
                out.push(single(q, rz(a.resolve(params))));
                out.push(single(q, ry(b.resolve(params))));
                out.push(single(q, rz(c.resolve(params))));
            }
            Gate::Cnot { control, target } => out.push(Op::Cnot { control, target }),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Single { qubit: usize, m: Matrix2 },
    Cnot { control: usize, target: usize },
}

pub fn hadamard() -> Matrix2 {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

pub fn rx(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let mis = Complex64::new(0.0, -s);
    [[Complex64::new(c, 0.0), mis], [mis, Complex64::new(c, 0.0)]]
}

pub fn ry(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub fn rz(theta: f64) -> Matrix2 {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

fn adjoint(m: &Matrix2) -> Matrix2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

/// Apply one gate with constant angles. Slotted angles must be bound first.
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    gate.validate(state.n_qubits)?;
    for a in gate.angles() {
        if let Angle::Slot(k) = a {
            return Err(Error::BadSlot(k, "unbound"));
        }
    }
    let mut ops = Vec::with_capacity(3);
    gate.lower(&[], &mut ops);
    let mut out = state.clone();
    for op in &ops {
        out.apply_op(op);
    }
    Ok(out)
}

/// Ordered gate list with trainable parameter slots `0..n_params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_params: usize,
}

impl CircuitSpec {
    /// Validates qubit indices and requires every slot in `0..n` to appear exactly once.
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        check_width(n_qubits)?;
        let mut seen: Vec<usize> = Vec::new();
        for g in &gates {
            g.validate(n_qubits)?;
            for a in g.angles() {
                if let Angle::Slot(k) = a {
                    if seen.len() <= k {
                        seen.resize(k + 1, 0);
                    }
                    seen[k] += 1;
                }
            }
        }
        for (k, &count) in seen.iter().enumerate() {
            match count {
                0 => return Err(Error::BadSlot(k, "never referenced")),
                1 => {}
                _ => return Err(Error::BadSlot(k, "referenced more than once")),
            }
        }
        Ok(Self {
            n_qubits,
            gates,
            n_params: seen.len(),
        })
    }

    pub fn empty(n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, Vec::new())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    fn bind(&self, params: &[f64]) -> Result<Vec<Op>> {
        if params.len() != self.n_params {
            return Err(Error::ParamCount {
                expected: self.n_params,
                got: params.len(),
            });
        }
        let mut ops = Vec::with_capacity(self.gates.len() * 2);
        for g in &self.gates {
            g.lower(params, &mut ops);
        }
        Ok(ops)
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits != self.n_qubits {
            return Err(Error::Dimension {
                context: "circuit width",
                expected: self.n_qubits,
                got: state.n_qubits,
            });
        }
        Ok(())
    }
}

/// CNOTs `q -> q+1` for each neighbouring pair, closed by `(n-1) -> 0`.
pub fn cnot_ring(n_qubits: usize) -> Vec<Gate> {
    let mut out = Vec::new();
    if n_qubits < 2 {
        return out;
    }
    for q in 0..n_qubits - 1 {
        out.push(Gate::Cnot {
            control: q,
            target: q + 1,
        });
    }
    out.push(Gate::Cnot {
        control: n_qubits - 1,
        target: 0,
    });
    out
}

pub fn run_circuit(state: &StateVector, circuit: &CircuitSpec, params: &[f64]) -> Result<StateVector> {
    circuit.check_state(state)?;
    let ops = circuit.bind(params)?;
    let mut out = state.clone();
    for op in &ops {
        out.apply_op(op);
    }
    Ok(out)
}

/// Applies `U(params)^dagger` (gates inverted, in reverse order).
pub fn run_circuit_adjoint(
    state: &StateVector,
    circuit: &CircuitSpec,
    params: &[f64],
) -> Result<StateVector> {
    circuit.check_state(state)?;
    let ops = circuit.bind(params)?;
    let mut out = state.clone();
    for op in ops.iter().rev() {
        out.apply_op_adjoint(op);
    }
    Ok(out)
}

pub fn expect_pauli(state: &StateVector, axis: Pauli, qubit: usize) -> Result<f64> {
    state.check_qubit(qubit)?;
    Ok(expect_unchecked(state, axis, qubit))
}

fn expect_unchecked(state: &StateVector, axis: Pauli, qubit: usize) -> f64 {
    let mask = state.mask(qubit);
    let a = &state.amps;
    match axis {
        Pauli::Z => a
            .iter()
            .enumerate()
            .map(|(i, c)| if i & mask == 0 { c.norm_sqr() } else { -c.norm_sqr() })
            .sum(),
        Pauli::X | Pauli::Y => {
            let mut acc = ZERO;
            for i in 0..a.len() {
                if i & mask == 0 {
                    acc += a[i].conj() * a[i | mask];
                }
            }
            if axis == Pauli::X {
                2.0 * acc.re
            } else {
                2.0 * acc.im
            }
        }
    }
}

/// `<sigma_axis>` for every qubit, in qubit order.
pub fn expect_all(state: &StateVector, axis: Pauli) -> Vec<f64> {
    (0..state.n_qubits)
        .map(|q| expect_unchecked(state, axis, q))
        .collect()
}

/// Finite-shot estimate of a Pauli expectation with exact value `exact`.
pub fn sample_expectation<R: Rng + ?Sized>(exact: f64, shots: u64, rng: &mut R) -> f64 {
    let p_plus = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
    let plus = Binomial::new(shots, p_plus)
        .expect("probability clamped to [0, 1]")
        .sample(rng);
    (2.0 * plus as f64 - shots as f64) / shots as f64
}

fn weighted_observable(
    state: &StateVector,
    observables: &[(Pauli, usize)],
    weights: &[f64],
) -> f64 {
    observables
        .iter()
        .zip(weights)
        .map(|(&(axis, q), w)| w * expect_unchecked(state, axis, q))
        .sum()
}

/// Gradient of `f(theta) = sum_j w_j <sigma_j>` by the two-term shift rule.
pub fn parameter_shift_grad(
    circuit: &CircuitSpec,
    params: &[f64],
    input: &StateVector,
    observables: &[(Pauli, usize)],
    weights: &[f64],
) -> Result<Vec<f64>> {
    parameter_shift_grad_with(Execution::Sequential, circuit, params, input, observables, weights)
}

pub fn parameter_shift_grad_with(
    exec: Execution,
    circuit: &CircuitSpec,
    params: &[f64],
    input: &StateVector,
    observables: &[(Pauli, usize)],
    weights: &[f64],
) -> Result<Vec<f64>> {
    circuit.check_state(input)?;
    if observables.len() != weights.len() {
        return Err(Error::Dimension {
            context: "observable weights",
            expected: observables.len(),
            got: weights.len(),
        });
    }
    for &(_, q) in observables {
        input.check_qubit(q)?;
    }
    circuit.bind(params)?;
    let grad = exec.map_range(circuit.n_params, |k| {
        let eval = |delta: f64| {
            let mut shifted = params.to_vec();
            shifted[k] += delta;
            let s = run_circuit(input, circuit, &shifted).expect("validated above");
            weighted_observable(&s, observables, weights)
        };
        0.5 * (eval(FRAC_PI_2) - eval(-FRAC_PI_2))
    });
    Ok(grad)
}

/// Gradient of `f(psi) = <psi| U^dagger O U |psi>` with respect to a real input
/// vector `psi`, where `O = sum_q w_q Z_q`. Returns `2 Re(U^dagger O U psi)`.
pub fn z_observable_input_grad(
    circuit: &CircuitSpec,
    params: &[f64],
    input: &StateVector,
    weights: &[f64],
) -> Result<Vec<f64>> {
    if weights.len() != circuit.n_qubits {
        return Err(Error::Dimension {
            context: "Z weights",
            expected: circuit.n_qubits,
            got: weights.len(),
        });
    }
    let mut phi = run_circuit(input, circuit, params)?;
    let n = phi.n_qubits;
    for (i, a) in phi.amps.iter_mut().enumerate() {
        let mut d = 0.0;
        for (q, w) in weights.iter().enumerate() {
            let bit = (i >> (n - 1 - q)) & 1;
            d += if bit == 0 { *w } else { -*w };
        }
        *a *= d;
    }
    let back = run_circuit_adjoint(&phi, circuit, params)?;
    Ok(back.amps.iter().map(|a| 2.0 * a.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn hadamard_on_zero() {
        let s = apply_gate(&StateVector::zero(1).unwrap(), &Gate::H(0)).unwrap();
        assert_abs_diff_eq!(s.amps[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn cnot_with_control_unset_is_identity() {
        let z = StateVector::zero(2).unwrap();
        let s = apply_gate(&z, &Gate::Cnot { control: 0, target: 1 }).unwrap();
        assert_eq!(s, z);
    }

    #[test]
    fn ry_half_pi() {
        let s = apply_gate(
            &StateVector::zero(1).unwrap(),
            &Gate::RY(0, Angle::Fixed(PI / 2.0)),
        )
        .unwrap();
        assert_abs_diff_eq!(s.amps[0].re, (PI / 4.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps[1].re, (PI / 4.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn gate_errors() {
        let z = StateVector::zero(2).unwrap();
        assert!(matches!(
            apply_gate(&z, &Gate::H(2)),
            Err(Error::QubitOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            apply_gate(&z, &Gate::Cnot { control: 1, target: 1 }),
            Err(Error::ControlIsTarget(1))
        ));
        assert!(matches!(
            apply_gate(&z, &Gate::RX(0, Angle::Slot(0))),
            Err(Error::BadSlot(0, _))
        ));
        assert!(matches!(StateVector::zero(15), Err(Error::TooManyQubits(15))));
    }

    #[test]
    fn slot_validation() {
        assert!(CircuitSpec::new(1, vec![Gate::RX(0, Angle::Slot(1))]).is_err());
        assert!(CircuitSpec::new(
            1,
            vec![Gate::RX(0, Angle::Slot(0)), Gate::RY(0, Angle::Slot(0))]
        )
        .is_err());
        let c = CircuitSpec::new(1, vec![Gate::RX(0, Angle::Slot(0))]).unwrap();
        assert!(matches!(
            run_circuit(&StateVector::zero(1).unwrap(), &c, &[]),
            Err(Error::ParamCount { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn empty_circuit_is_identity() {
        let s = apply_gate(&StateVector::zero(2).unwrap(), &Gate::H(1)).unwrap();
        let c = CircuitSpec::empty(2).unwrap();
        assert_eq!(run_circuit(&s, &c, &[]).unwrap(), s);
    }

    #[test]
    fn zero_angle_rotations_are_identity() {
        let mut gates = vec![Gate::H(0), Gate::H(1)];
        let base = CircuitSpec::new(2, gates.clone()).unwrap();
        let s = run_circuit(&StateVector::zero(2).unwrap(), &base, &[]).unwrap();
        gates.clear();
        for q in 0..2 {
            gates.push(Gate::RX(q, Angle::Fixed(0.0)));
            gates.push(Gate::RY(q, Angle::Fixed(0.0)));
            gates.push(Gate::RZ(q, Angle::Fixed(0.0)));
        }
        let c = CircuitSpec::new(2, gates).unwrap();
        let out = run_circuit(&s, &c, &[]).unwrap();
        for (a, b) in out.amps.iter().zip(&s.amps) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn pauli_eigenstates() {
        let z = StateVector::zero(1).unwrap();
        assert_eq!(expect_pauli(&z, Pauli::Z, 0).unwrap(), 1.0);
        let plus = apply_gate(&z, &Gate::H(0)).unwrap();
        assert_abs_diff_eq!(expect_pauli(&plus, Pauli::X, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expect_pauli(&plus, Pauli::Y, 0).unwrap(), 0.0, epsilon = 1e-15);
        let y_plus = apply_gate(&z, &Gate::RX(0, Angle::Fixed(-PI / 2.0))).unwrap();
        assert_abs_diff_eq!(expect_pauli(&y_plus, Pauli::Y, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(expect_pauli(&z, Pauli::X, 1).is_err());
    }

    #[test]
    fn ry_expectation_is_cosine() {
        for theta in [0.3, 1.1, 2.5] {
            let s = apply_gate(&StateVector::zero(1).unwrap(), &Gate::RY(0, Angle::Fixed(theta)))
                .unwrap();
            assert_abs_diff_eq!(expect_pauli(&s, Pauli::Z, 0).unwrap(), theta.cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn shift_rule_single_ry() {
        let c = CircuitSpec::new(1, vec![Gate::RY(0, Angle::Slot(0))]).unwrap();
        let z = StateVector::zero(1).unwrap();
        let g = parameter_shift_grad(&c, &[PI / 2.0], &z, &[(Pauli::Z, 0)], &[1.0]).unwrap();
        assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-14);
        let g = parameter_shift_grad(&c, &[0.0], &z, &[(Pauli::Z, 0)], &[1.0]).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rot_matches_zyz_composition() {
        let (a, b, c) = (0.4, -1.3, 2.2);
        let mut s = StateVector::zero(1).unwrap();
        s = apply_gate(&s, &Gate::H(0)).unwrap();
        let rot = apply_gate(&s, &Gate::Rot(0, [Angle::Fixed(a), Angle::Fixed(b), Angle::Fixed(c)]))
            .unwrap();
        let mut seq = apply_gate(&s, &Gate::RZ(0, Angle::Fixed(a))).unwrap();
        seq = apply_gate(&seq, &Gate::RY(0, Angle::Fixed(b))).unwrap();
        seq = apply_gate(&seq, &Gate::RZ(0, Angle::Fixed(c))).unwrap();
        for (x, y) in rot.amps.iter().zip(&seq.amps) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ring_layout() {
        assert_eq!(cnot_ring(1), vec![]);
        assert_eq!(cnot_ring(2).len(), 2);
        let r = cnot_ring(4);
        assert_eq!(r.len(), 4);
        assert_eq!(r[3], Gate::Cnot { control: 3, target: 0 });
    }

    #[test]
    fn input_grad_matches_finite_difference() {
        let gates = {
            let mut g = vec![Gate::H(0), Gate::RY(1, Angle::Slot(0))];
            g.extend(cnot_ring(2));
            g.push(Gate::Rot(0, [Angle::Slot(1), Angle::Slot(2), Angle::Slot(3)]));
            g
        };
        let c = CircuitSpec::new(2, gates).unwrap();
        let params = [0.3, -0.7, 1.9, 0.2];
        let w = [0.8, -1.4];
        let psi = [0.1, 0.5, -0.3, 0.2];
        let f = |v: &[f64]| {
            let s = run_circuit(&StateVector::from_real_unchecked(v), &c, &params).unwrap();
            w[0] * expect_unchecked(&s, Pauli::Z, 0) + w[1] * expect_unchecked(&s, Pauli::Z, 1)
        };
        let g = z_observable_input_grad(&c, &params, &StateVector::from_real_unchecked(&psi), &w)
            .unwrap();
        for i in 0..4 {
            let mut p = psi;
            let mut m = psi;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            assert_abs_diff_eq!(g[i], (f(&p) - f(&m)) / 2e-6, epsilon = 1e-7);
        }
    }

    #[test]
    fn sampled_expectation_converges() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let est = sample_expectation(0.4, 200_000, &mut rng);
        assert!((est - 0.4).abs() < 0.01);
    }
}
