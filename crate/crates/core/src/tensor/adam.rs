use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-8,
        }
    }
}

/// Adam moments for every parameter of one store, with decoupled weight
/// decay applied to the value before the moment update.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Result<Self> {
        let positive = [config.lr, config.beta1, config.beta2, config.eps];
        if positive.iter().any(|v| !(*v > 0.0)) || config.weight_decay < 0.0 {
            return Err(Error::Config(format!("invalid Adam hyperparameters {config:?}")));
        }
        if config.beta1 >= 1.0 || config.beta2 >= 1.0 {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        Ok(Self {
            config,
            step: 0,
            first: store.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            second: store.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.second[index]
    }

    /// One update using the gradients currently stored in `store`, at learning
    /// rate `lr` (allowing schedules to override the configured rate).
    pub fn step_with_lr(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        for p in store.iter() {
            if let Some(g) = &p.gradient {
                if g.data().iter().any(|v| v.is_nan()) {
                    return Err(Error::NanGradient {
                        id: p.id.0,
                        name: p.name.clone(),
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            let grad = p.gradient.take().unwrap_or_else(|| p.value.zeros_like());
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for ((w, g), (mi, vi)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *w -= lr * weight_decay * *w;
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.gradient = Some(grad);
        }
        Ok(())
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let lr = self.config.lr;
        self.step_with_lr(store, lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use std::collections::BTreeMap;

    fn single(value: f64) -> (ParamStore, crate::tensor::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", DenseTensor::from_vec(vec![value]));
        (store, id)
    }

    fn set_grad(store: &mut ParamStore, id: crate::tensor::ParamId, g: f64) {
        let mut m = BTreeMap::new();
        m.insert(id, DenseTensor::from_vec(vec![g]));
        store.set_gradients(m).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_value_and_moments() {
        let (mut store, id) = single(0.7);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &store).unwrap();
        set_grad(&mut store, id, 0.0);
        adam.step(&mut store).unwrap();
        assert_eq!(store.get(id).value.data(), &[0.7]);
        assert_eq!(adam.first_moment(0), &[0.0]);
        assert_eq!(adam.second_moment(0), &[0.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut store, id) = single(0.0);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &store).unwrap();
        set_grad(&mut store, id, 1.0);
        adam.step(&mut store).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let expected = -1e-4 * (1.0 / (1.0 + 1e-8));
        assert!((store.get(id).value.data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn decreases_convex_quadratic() {
        // loss = (w - 3)^2
        let (mut store, id) = single(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &store).unwrap();
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut last = loss(0.0);
        for _ in 0..2 {
            let w = store.get(id).value.data()[0];
            set_grad(&mut store, id, 2.0 * (w - 3.0));
            adam.step(&mut store).unwrap();
            let now = loss(store.get(id).value.data()[0]);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let (mut store, id) = single(2.0);
        let cfg = AdamConfig {
            lr: 0.5,
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &store).unwrap();
        set_grad(&mut store, id, 0.0);
        adam.step(&mut store).unwrap();
        assert!((store.get(id).value.data()[0] - (2.0 - 0.5 * 0.1 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts_with_id() {
        let (mut store, id) = single(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &store).unwrap();
        set_grad(&mut store, id, f64::NAN);
        let err = adam.step(&mut store).unwrap_err();
        assert!(matches!(err, Error::NanGradient { id: 0, .. }));
        assert_eq!(adam.step_count(), 0);
    }
}
