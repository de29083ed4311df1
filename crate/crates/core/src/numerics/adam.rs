use super::{Gradients, ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for every tensor of one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        AdamState {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient entry are treated
    /// as having zero gradient.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.first.len(),
                params.len()
            )));
        }
        for (id, g) in grads.iter() {
            if id.0 >= params.len() || g.shape() != params.get(id).shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: params.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids() {
            let Some(g) = grads.get(id) else {
                // Zero gradient still decays the moments.
                self.first[id.0].data_mut().iter_mut().for_each(|m| *m *= beta1);
                self.second[id.0].data_mut().iter_mut().for_each(|v| *v *= beta2);
                apply(
                    params.get_mut(id),
                    &self.first[id.0],
                    &self.second[id.0],
                    lr,
                    bias1,
                    bias2,
                    eps,
                );
                continue;
            };
            let m = self.first[id.0].data_mut();
            for (mi, gi) in m.iter_mut().zip(g.data()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
            }
            let v = self.second[id.0].data_mut();
            for (vi, gi) in v.iter_mut().zip(g.data()) {
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            }
            apply(
                params.get_mut(id),
                &self.first[id.0],
                &self.second[id.0],
                lr,
                bias1,
                bias2,
                eps,
            );
        }
        Ok(())
    }
}

fn apply(p: &mut Tensor, m: &Tensor, v: &Tensor, lr: f64, bias1: f64, bias2: f64, eps: f64) {
    for ((pi, mi), vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
        let mhat = mi / bias1;
        let vhat = vi / bias2;
        *pi -= lr * mhat / (vhat.sqrt() + eps);
    }
}
