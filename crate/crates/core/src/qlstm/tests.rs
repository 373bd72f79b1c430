use super::*;
use crate::data::{build_lags, LagMode};
use crate::qsim::{Gate, StateVector};
use num_complex::Complex64;
use rand::SeedableRng;

fn zero_lstm_model(hidden: usize, input: usize, outputs: usize) -> LstmModel {
    SequenceModel::new(LstmCell::zeros(hidden, input).unwrap(), Readout::zeros(hidden, outputs)).unwrap()
}

fn random_lstm_model(hidden: usize, input: usize, outputs: usize, seed: u64) -> LstmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = LstmCell::random(hidden, input, &mut rng).unwrap();
    SequenceModel::new(cell, Readout::random(hidden, outputs, &mut rng)).unwrap()
}

fn qlstm_model(q: usize, layers: usize, input: usize, outputs: usize, seed: u64) -> QlstmModel {
    let cfg = QlstmConfig {
        n_qubits: q,
        layers,
        ..QlstmConfig::default()
    };
    let cell = QlstmCell::new(cfg, input, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    SequenceModel::new(cell, Readout::random(q, outputs, &mut rng)).unwrap()
}

fn toy_series(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|t| (0.5 * t as f64 + phase).sin() + 0.1 * t as f64 / n as f64).collect()
}

#[test]
fn zero_lstm_gates_are_half() {
    let cell = LstmCell::zeros(3, 2).unwrap();
    let (s, g) = step_with_gates(&cell, &RecurrentState::zeros(3), &[0.7, -2.0]).unwrap();
    assert!(g.f.iter().chain(&g.i).chain(&g.o).all(|&x| x == 0.5));
    assert!(g.g.iter().all(|&x| x == 0.0));
    assert_eq!(s, RecurrentState::zeros(3));
}

#[test]
fn zero_lstm_carries_cell_state() {
    let cell = LstmCell::zeros(2, 1).unwrap();
    let state = RecurrentState {
        h: vec![0.0; 2],
        c: vec![1.0; 2],
    };
    let s = lstm_step(&cell, &state, &[3.0]).unwrap();
    for k in 0..2 {
        assert_eq!(s.c[k], 0.5);
        assert!((s.h[k] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
    }
}

#[test]
fn lstm_dimension_errors() {
    let cell = LstmCell::zeros(2, 1).unwrap();
    assert!(matches!(
        lstm_step(&cell, &RecurrentState::zeros(2), &[1.0, 2.0]),
        Err(Error::Dimension { .. })
    ));
    assert!(lstm_step(&cell, &RecurrentState::zeros(3), &[1.0]).is_err());
}

/// Independent scalar implementation of the six classical equations.
fn scalar_lstm(cell: &LstmCell, xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let hsz = cell.hidden_size();
    let d = cell.input_size();
    let mut h = vec![0.0; hsz];
    let mut c = vec![0.0; hsz];
    let sig = |x: f64| 1.0 / (1.0 + f64::exp(-x));
    for x in xs {
        let mut v = h.clone();
        v.extend(x);
        let mut pre = [[0.0; 8]; 4];
        for (k, p) in pre.iter_mut().enumerate() {
            let w = cell.weight(k);
            let b = cell.bias(k);
            for r in 0..hsz {
                let mut acc = b[r];
                for j in 0..hsz + d {
                    acc += w[r * (hsz + d) + j] * v[j];
                }
                p[r] = acc;
            }
        }
        let mut nh = vec![0.0; hsz];
        for r in 0..hsz {
            let f = sig(pre[0][r]);
            let i = sig(pre[1][r]);
            let ct = pre[2][r].tanh();
            let o = sig(pre[3][r]);
            c[r] = f * c[r] + i * ct;
            nh[r] = o * c[r].tanh();
        }
        h = nh;
    }
    (h, c)
}

#[test]
fn lstm_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cell = LstmCell::random(5, 2, &mut rng).unwrap();
    let xs = vec![vec![0.3, -1.2], vec![2.0, 0.1], vec![-0.4, 0.9]];
    let s = run_sequence(&cell, &xs).unwrap();
    let (h, c) = scalar_lstm(&cell, &xs);
    for k in 0..5 {
        assert!((s.h[k] - h[k]).abs() < 1e-10);
        assert!((s.c[k] - c[k]).abs() < 1e-10);
    }
}

/// Dense 4x4 complex matrices for the two-qubit oracle. Qubit 0 is the high bit.
type M4 = [[Complex64; 4]; 4];

fn mat_vec(m: &M4, v: &[Complex64; 4]) -> [Complex64; 4] {
    std::array::from_fn(|r| (0..4).map(|c| m[r][c] * v[c]).sum())
}

fn real_m4(rows: [[f64; 4]; 4]) -> M4 {
    rows.map(|r| r.map(|x| Complex64::new(x, 0.0)))
}

#[test]
fn qlstm_two_qubit_zero_angles_match_matrix_oracle() {
    let mut cell = QlstmCell::new(
        QlstmConfig {
            n_qubits: 2,
            layers: 1,
            ..QlstmConfig::default()
        },
        1,
        4,
    )
    .unwrap();
    let n_enc = cell.encoder().len();
    let mut p = cell.params();
    for x in &mut p[n_enc..] {
        *x = 0.0;
    }
    cell.set_params(&p).unwrap();

    let state = RecurrentState {
        h: vec![0.2, -0.1],
        c: vec![0.5, -0.3],
    };
    let x = [0.8];
    let v = [0.2, -0.1, 0.8];
    let e: Vec<f64> = (0..4)
        .map(|r| (0..3).map(|j| cell.encoder()[r * 3 + j] * v[j]).sum())
        .collect();
    let n = e.iter().map(|a| a * a).sum::<f64>().sqrt();
    let psi: [Complex64; 4] = std::array::from_fn(|i| Complex64::new(e[i] / n, 0.0));

    let h = 0.5;
    let hh = real_m4([[h, h, h, h], [h, -h, h, -h], [h, h, -h, -h], [h, -h, -h, h]]);
    // CNOT 0 -> 1 swaps |10> and |11>; CNOT 1 -> 0 swaps |01> and |11>.
    let c01 = real_m4([[1., 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 0., 1.], [0., 0., 1., 0.]]);
    let c10 = real_m4([[1., 0., 0., 0.], [0., 0., 0., 1.], [0., 0., 1., 0.], [0., 1., 0., 0.]]);
    let out = mat_vec(&c10, &mat_vec(&c01, &mat_vec(&hh, &psi)));
    let p: Vec<f64> = out.iter().map(|a| a.norm_sqr()).collect();
    let z = [p[0] + p[1] - p[2] - p[3], p[0] - p[1] + p[2] - p[3]];

    let (next, gates) = step_with_gates(&cell, &state, &x).unwrap();
    let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
    for q in 0..2 {
        assert!((gates.f[q] - sig(z[q])).abs() < 1e-12);
        assert!((gates.g[q] - z[q].tanh()).abs() < 1e-12);
        let c = sig(z[q]) * state.c[q] + sig(z[q]) * z[q].tanh();
        assert!((next.c[q] - c).abs() < 1e-12);
        assert!((next.h[q] - sig(z[q]) * c.tanh()).abs() < 1e-12);
    }
    // The oracle circuit really is H layer then ring with no rotations.
    assert!(matches!(cell.circuit().gates()[0], Gate::H(0)));
}

#[test]
fn gate_codomains_hold() {
    let model = qlstm_model(3, 2, 2, 1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut lstm_rng = ChaCha8Rng::seed_from_u64(2);
    let lstm = LstmCell::random(4, 2, &mut lstm_rng).unwrap();
    let mut s = RecurrentState::zeros(3);
    let mut sl = RecurrentState::zeros(4);
    for _ in 0..20 {
        let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let (ns, g) = step_with_gates(&model.cell, &s, &x).unwrap();
        let (nl, gl) = step_with_gates(&lstm, &sl, &x).unwrap();
        for g in [&g, &gl] {
            assert!(g.f.iter().chain(&g.i).chain(&g.o).all(|&v| v > 0.0 && v < 1.0));
            assert!(g.g.iter().all(|&v| v > -1.0 && v < 1.0));
        }
        s = ns;
        sl = nl;
    }
}

#[test]
fn qlstm_is_deterministic() {
    let a = qlstm_model(4, 2, 1, 1, 3);
    let b = qlstm_model(4, 2, 1, 1, 3);
    let xs: Vec<Vec<f64>> = (0..6).map(|t| vec![(t as f64).cos()]).collect();
    let mut sa = RecurrentState::zeros(4);
    let mut sb = RecurrentState::zeros(4);
    for x in &xs {
        sa = qlstm_step(&a.cell, &sa, x).unwrap();
        sb = qlstm_step(&b.cell, &sb, x).unwrap();
        assert_eq!(sa.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), sb.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn zero_encoding_reports_step() {
    let mut model = qlstm_model(2, 1, 1, 1, 0);
    let mut p = model.cell.params();
    let n_enc = model.cell.encoder().len();
    p[..n_enc].iter_mut().for_each(|x| *x = 0.0);
    model.cell.set_params(&p).unwrap();
    let err = model.forecast_window(&[vec![1.0], vec![2.0]]).unwrap_err();
    assert!(matches!(err, Error::AtStep { step: 0, .. }), "{err}");
}

#[test]
fn forecast_zero_model_and_identity_readout() {
    let s = toy_series(30, 0.0);
    let data = build_lags(&[&s], 4, 1, LagMode::Univariate).unwrap();
    let zero = zero_lstm_model(3, 1, 1);
    let p = zero.forecast_sequence(&data, 0..data.rows(), Execution::Sequential).unwrap();
    assert!(p.iter().all(|&v| v == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cell = LstmCell::random(1, 1, &mut rng).unwrap();
    let mut readout = Readout::zeros(1, 1);
    readout.weight[0] = 1.0;
    let model = SequenceModel::new(cell.clone(), readout).unwrap();
    let h1 = lstm_step(&cell, &RecurrentState::zeros(1), &[0.4]).unwrap().h[0];
    assert_eq!(model.forecast_window(&[vec![0.4]]).unwrap(), vec![h1]);
    assert!(model.forecast_window(&[]).is_err());
}

#[test]
fn qlstm_forecast_replays() {
    let s = toy_series(20, 0.3);
    let data = build_lags(&[&s], 4, 1, LagMode::Univariate).unwrap();
    let m = qlstm_model(4, 2, 1, 1, 9);
    let a = m.forecast_sequence(&data, 0..10, Execution::Sequential).unwrap();
    let b = m.forecast_sequence(&data, 0..10, Execution::Parallel).unwrap();
    assert_eq!(a.len(), 10);
    assert_eq!(a, b);
}

fn fd_check<C: GateCell>(model: &SequenceModel<C>, data: &LagDataset, rows: &[usize], tol: f64) {
    let (_, g) = model.batch_loss_grad(data, rows, Execution::Sequential).unwrap();
    let base = model.params();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut m = model.clone();
        let mut p = base.clone();
        p[k] += eps;
        m.set_params(&p).unwrap();
        let lp = m.batch_loss_grad(data, rows, Execution::Sequential).unwrap().0;
        p[k] -= 2.0 * eps;
        m.set_params(&p).unwrap();
        let lm = m.batch_loss_grad(data, rows, Execution::Sequential).unwrap().0;
        worst = worst.max((g[k] - (lp - lm) / (2.0 * eps)).abs());
    }
    assert!(worst < tol, "max gradient deviation {worst}");
}

#[test]
fn qlstm_gradient_matches_finite_difference() {
    let a = toy_series(12, 0.0);
    let b = toy_series(12, 1.0);
    let data = build_lags(&[&a, &b], 3, 1, LagMode::Multivariate).unwrap();
    let model = qlstm_model(2, 1, 2, 2, 21);
    fd_check(&model, &data, &[0, 1], 1e-3);
}

#[test]
fn lstm_gradient_matches_finite_difference() {
    let a = toy_series(12, 0.5);
    let data = build_lags(&[&a], 4, 1, LagMode::Univariate).unwrap();
    let model = random_lstm_model(3, 1, 1, 4);
    fd_check(&model, &data, &[0, 2, 5], 1e-6);
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let s = toy_series(24, 0.4);
    let data = build_lags(&[&s], 4, 1, LagMode::Univariate).unwrap();
    let mut model = qlstm_model(2, 1, 1, 1, 2);
    let before = model.params();
    let opt = OptimizerConfig {
        learning_rate: 0.0,
        epochs: 3,
        ..OptimizerConfig::default()
    };
    let report = train_qlstm(&mut model, &data, &opt, Execution::Parallel).unwrap();
    assert_eq!(model.params(), before);
    assert_eq!(report.loss_curve.len(), 3);
}

fn constant_target_curve(level: f64, seed: u64) -> Vec<f64> {
    let s = vec![level; 30];
    let data = build_lags(&[&s], 4, 1, LagMode::Univariate).unwrap();
    let mut model = qlstm_model(4, 2, 1, 1, seed);
    let opt = OptimizerConfig {
        epochs: 20,
        ..OptimizerConfig::default()
    };
    train_qlstm(&mut model, &data, &opt, Execution::Parallel).unwrap().loss_curve
}

#[test]
fn constant_target_loss_decreases() {
    for seed in [1, 7] {
        let c = constant_target_curve(2.0, seed);
        assert!(c.iter().all(|l| l.is_finite()));
        for w in c.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{c:?}");
        }
    }
}

// Close to the initial prediction Adam reaches ~1e-4 within ten epochs and
// then overshoots, so only overall descent is asserted here.
#[test]
fn small_constant_target_descends() {
    let c = constant_target_curve(0.8, 7);
    assert!(c[19] < 0.05 * c[0], "{c:?}");
}

#[test]
fn training_is_reproducible_across_policies() {
    let s = toy_series(30, 0.2);
    let data = build_lags(&[&s], 4, 1, LagMode::Univariate).unwrap();
    let opt = OptimizerConfig {
        epochs: 3,
        ..OptimizerConfig::default()
    };
    let mut a = random_lstm_model(3, 1, 1, 1);
    let mut b = a.clone();
    let ra = train_lstm(&mut a, &data, &opt, Execution::Sequential).unwrap();
    let rb = train_lstm(&mut b, &data, &opt, Execution::Parallel).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a, b);
}

#[test]
fn parameter_counts() {
    let uni = qlstm_model(4, 2, 1, 1, 0);
    assert_eq!(uni.n_params(), 16 * 5 + 4 * 20 + 5);
    let multi = qlstm_model(4, 2, 2, 2, 0);
    assert_eq!(multi.n_params(), 16 * 6 + 4 * 20 + 10);
    let lstm = random_lstm_model(5, 2, 2, 0);
    assert_eq!(lstm.n_params(), lstm_param_count(5, 2, 2));
    assert_eq!(lstm_param_count(5, 2, 2), 172);
    assert_eq!(matched_lstm_hidden(186, 2, 2), 5);
    assert!(param_gap(186, 172) <= 0.1);
    let all_rot = gate_circuit_len(AnsatzStyle::AllRot);
    assert_eq!(all_rot, 2 * 4 * 3 + 12);
}

fn gate_circuit_len(style: AnsatzStyle) -> usize {
    quantum::gate_circuit(4, 2, style).unwrap().n_params()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.json");
    let mut model = qlstm_model(3, 2, 2, 2, 13);
    let mut p = model.params();
    p[0] = 1.0 / 3.0;
    p[1] = -0.0;
    p[2] = 1e-310;
    model.set_params(&p).unwrap();
    save_checkpoint(&path, &Checkpoint::new("qlstm", 13, model.n_params(), model.clone())).unwrap();
    let back: Checkpoint<QlstmModel> = load_checkpoint(&path).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(back.model.params()), bits(model.params()));
    assert_eq!(back.model, model);
    assert_eq!(back.seed, 13);
}

#[test]
fn statevector_oracle_agrees_with_simulator() {
    // Sanity check that the dense oracle above uses the simulator's bit order.
    let s = StateVector::basis(2, 2).unwrap();
    let z = crate::qsim::expect_all(&s, crate::qsim::Pauli::Z);
    assert_eq!(z, vec![-1.0, 1.0]);
}
