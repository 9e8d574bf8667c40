use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::tensor::Tensor;
use crate::error::{usage, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments for every parameter tensor of one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros = |t: &&Tensor| Tensor::zeros(t.shape().to_vec());
        let params = net.parameters();
        Self {
            config,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected Adam update. Parameters without a gradient (an unused
    /// head) keep their value and moments.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let mut params = net.parameters_mut();
        if grads.len() != params.len() || params.len() != self.first.len() {
            return Err(usage(format!(
                "gradient list has {} tensors, network has {}",
                grads.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(usage(format!(
                        "gradient {i} has shape {:?}, parameter has {:?}",
                        g.shape(),
                        p.shape()
                    )));
                }
                if !g.all_finite() {
                    return Err(Error::Training(format!("non-finite gradient in parameter {i}")));
                }
            }
        }

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let p = params[i].data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, mv), vv), &gv) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    state.step(net, grads)
}
