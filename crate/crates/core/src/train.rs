//! Optimizers, losses and evaluation metrics shared by the recurrent and
//! reservoir models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Mini-batch size in windows; `0` means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 0.01,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// Checks used for user-supplied configs. Training itself also accepts a
    /// zero learning rate, which freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

fn check_grads(params: &[f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension {
            context: "gradient",
            expected: params.len(),
            got: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(())
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_grads(params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::Dimension {
            context: "Adam moments",
            expected: params.len(),
            got: state.m.len(),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], cfg: &OptimizerConfig) -> Result<()> {
    check_grads(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= cfg.learning_rate * g;
    }
    Ok(())
}

/// Owns the per-run optimizer state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    adam: AdamState,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, n_params: usize) -> Self {
        Self {
            cfg,
            adam: AdamState::new(n_params),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self.cfg.kind {
            OptimizerKind::Adam => adam_step(params, grads, &mut self.adam, &self.cfg),
            OptimizerKind::Sgd => sgd_step(params, grads, &self.cfg),
        }
    }
}

/// Root mean squared error over all entries (all channels pooled).
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    Ok(mse(pred, actual)?.sqrt())
}

pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::Dimension {
            context: "prediction vs actual",
            expected: actual.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Data("RMSE of an empty series".into()));
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(sse / pred.len() as f64)
}

/// RMSE per output channel for row-major `rows x channels` data.
pub fn rmse_per_channel(pred: &[f64], actual: &[f64], channels: usize) -> Result<Vec<f64>> {
    if channels == 0 || !pred.len().is_multiple_of(channels) {
        return Err(Error::Dimension {
            context: "channel layout",
            expected: channels,
            got: pred.len(),
        });
    }
    (0..channels)
        .map(|c| {
            let p: Vec<f64> = pred.iter().skip(c).step_by(channels).copied().collect();
            let a: Vec<f64> = actual.iter().skip(c).step_by(channels).copied().collect();
            rmse(&p, &a)
        })
        .collect()
}

/// `1 / (1 + rmse)`.
pub fn pseudo_accuracy(rmse_value: f64) -> Result<f64> {
    if !(rmse_value >= 0.0) {
        return Err(Error::Data(format!("RMSE must be non-negative, got {rmse_value}")));
    }
    Ok(1.0 / (1.0 + rmse_value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub pseudo_accuracy: f64,
}

impl Metrics {
    pub fn from_rmse(rmse_value: f64) -> Result<Self> {
        Ok(Self {
            rmse: rmse_value,
            pseudo_accuracy: pseudo_accuracy(rmse_value)?,
        })
    }

    pub fn evaluate(pred: &[f64], actual: &[f64]) -> Result<Self> {
        Self::from_rmse(rmse(pred, actual)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse(&[2.0, 3.0, -1.0], &[1.0, 2.0, -2.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt(), epsilon = 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn pseudo_accuracy_examples() {
        assert_eq!(pseudo_accuracy(0.0).unwrap(), 1.0);
        assert_eq!(pseudo_accuracy(1.0).unwrap(), 0.5);
        assert_eq!(pseudo_accuracy(3.0).unwrap(), 0.25);
        assert!(pseudo_accuracy(-0.1).is_err());
        assert!(pseudo_accuracy(f64::NAN).is_err());
    }

    #[test]
    fn per_channel() {
        let pred = [0.0, 0.0, 1.0, 0.0];
        let act = [0.0, 2.0, 1.0, 2.0];
        assert_eq!(rmse_per_channel(&pred, &act, 2).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn adam_examples() {
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, &cfg).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        assert_abs_diff_eq!(p[0], -0.1 / (1.0 + 1e-8), epsilon = 1e-15);

        let mut p = vec![0.5, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &cfg).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);
        assert_eq!(st.t, 1);

        let frozen = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        adam_step(&mut p, &[3.0, -1.0], &mut st, &frozen).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);

        assert!(matches!(
            adam_step(&mut p, &[f64::NAN, 0.0], &mut st, &cfg),
            Err(Error::NonFiniteGradient)
        ));
        assert!(adam_step(&mut p, &[0.0], &mut st, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn rmse_symmetric(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        }

        #[test]
        fn pseudo_accuracy_decreasing(a in 0.0f64..1e6, d in 1e-6f64..10.0) {
            let pa = pseudo_accuracy(a).unwrap();
            prop_assert!(pa > 0.0 && pa <= 1.0);
            prop_assert!(pseudo_accuracy(a + d).unwrap() < pa);
        }
    }
}
