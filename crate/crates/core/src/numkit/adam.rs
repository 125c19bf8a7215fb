use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{NumError, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            weight_decay: 1e-7,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for every parameter in a store.
///
/// Weight decay is classic L2: `λ·θ` is added to the gradient before the
/// moment updates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: IndexMap<String, Tensor>,
    v: IndexMap<String, Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |params: &ParamStore| {
            params
                .iter()
                .map(|(k, t)| (k.to_string(), Tensor::zeros(t.shape())))
                .collect()
        };
        Self {
            config,
            m: zeros(params),
            v: zeros(params),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update. Parameters without an entry in `grads` are
    /// treated as having zero gradient.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &IndexMap<String, Tensor>,
    ) -> Result<(), NumError> {
        self.t += 1;
        let AdamConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);

        for (name, theta) in params.iter_mut() {
            let (Some(m), Some(v)) = (self.m.get_mut(name), self.v.get_mut(name)) else {
                return Err(NumError::State(format!("no optimizer state for `{name}`")));
            };
            if m.shape() != theta.shape() || v.shape() != theta.shape() {
                return Err(NumError::State(format!(
                    "optimizer state for `{name}` has shape {:?}, parameter has {:?}",
                    m.shape(),
                    theta.shape()
                )));
            }
            let grad = grads.get(name);
            if let Some(g) = grad {
                if g.shape() != theta.shape() {
                    return Err(NumError::State(format!(
                        "gradient for `{name}` has shape {:?}, parameter has {:?}",
                        g.shape(),
                        theta.shape()
                    )));
                }
            }
            let md = m.data_mut();
            let vd = v.data_mut();
            for (i, th) in theta.data_mut().iter_mut().enumerate() {
                let g = grad.map_or(0.0, |g| g.data()[i]) + weight_decay * *th;
                md[i] = beta1 * md[i] + (1.0 - beta1) * g;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                *th -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[(&str, Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (k, v) in values {
            s.insert(k, Tensor::vector(v.clone()));
        }
        s
    }

    fn grads(values: &[(&str, Vec<f64>)]) -> IndexMap<String, Tensor> {
        values
            .iter()
            .map(|(k, v)| (k.to_string(), Tensor::vector(v.clone())))
            .collect()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = store(&[("w", vec![0.0])]);
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &params);
        adam.step(&mut params, &grads(&[("w", vec![1.0])])).unwrap();
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((params.get("w").unwrap().data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = store(&[("w", vec![0.3, -2.0])]);
        let before = params.clone();
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &params);
        for _ in 0..5 {
            adam.step(&mut params, &grads(&[("w", vec![0.0, 0.0])]))
                .unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut params = store(&[("w", vec![0.3, -2.0, 1e-300])]);
        let before = params.clone();
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &params);
        adam.step(&mut params, &grads(&[("w", vec![5.0, -1.0, 3.0])]))
            .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn identical_parameters_get_identical_updates() {
        let mut params = store(&[("a", vec![0.5]), ("b", vec![0.5])]);
        let mut adam = AdamState::new(
            AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            &params,
        );
        for g in [0.3, -1.2, 0.7] {
            adam.step(&mut params, &grads(&[("a", vec![g]), ("b", vec![g])]))
                .unwrap();
        }
        assert_eq!(params.get("a"), params.get("b"));
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let params = store(&[("w", vec![0.0, 1.0])]);
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        let mut bigger = store(&[("w", vec![0.0, 1.0, 2.0])]);
        assert!(matches!(
            adam.step(&mut bigger, &IndexMap::new()),
            Err(NumError::State(_))
        ));
    }
}
