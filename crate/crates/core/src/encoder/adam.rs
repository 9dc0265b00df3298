use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EncoderError, Gradients, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Adam with bias correction. Moments are keyed by parameter-block name and
/// created lazily, so blocks that become trainable later (the reduction layer
/// after a switch) start from zero moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, network: &mut Network, grads: &Gradients) -> Result<(), EncoderError> {
        for (name, g) in grads.blocks() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(EncoderError::NonFiniteGradient {
                    block: name.to_string(),
                });
            }
        }
        let mut params = network.parameter_blocks_mut();
        if params.len() != grads.blocks().len() {
            return Err(EncoderError::GradientLayout);
        }
        for ((pname, p), (gname, g)) in params.iter().zip(grads.blocks()) {
            if pname != gname || p.len() != g.len() {
                return Err(EncoderError::GradientLayout);
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((name, param), (_, grad)) in params.iter_mut().zip(grads.blocks()) {
            let m = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                first: vec![0.0; grad.len()],
                second: vec![0.0; grad.len()],
            });
            for (((p, g), m1), m2) in param.iter_mut().zip(grad).zip(&mut m.first).zip(&mut m.second) {
                *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                let m_hat = *m1 / c1;
                let v_hat = *m2 / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        drop(params);
        network.bump_version();
        Ok(())
    }
}
