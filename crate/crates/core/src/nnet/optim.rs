//! Adadelta.

use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use super::NnetError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdadeltaConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            lr: 1.0,
            rho: 0.9,
            eps: 1e-6,
        }
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdadeltaSlot {
    pub sq_grad: Vec<f64>,
    pub sq_delta: Vec<f64>,
}

impl AdadeltaSlot {
    pub fn zeros(n: usize) -> Self {
        AdadeltaSlot {
            sq_grad: vec![0.0; n],
            sq_delta: vec![0.0; n],
        }
    }
}

pub fn adadelta_step(
    param: &mut [f64],
    grad: &[f64],
    slot: &mut AdadeltaSlot,
    cfg: &AdadeltaConfig,
) -> Result<(), NnetError> {
    let n = param.len();
    if grad.len() != n || slot.sq_grad.len() != n || slot.sq_delta.len() != n {
        return Err(NnetError::ShapeMismatch(format!(
            "adadelta: param {n}, grad {}, state {}/{}",
            grad.len(),
            slot.sq_grad.len(),
            slot.sq_delta.len()
        )));
    }
    let (rho, eps) = (cfg.rho, cfg.eps);
    for i in 0..n {
        let g = grad[i];
        let eg = rho * slot.sq_grad[i] + (1.0 - rho) * g * g;
        let delta = -((slot.sq_delta[i] + eps).sqrt() / (eg + eps).sqrt()) * g;
        slot.sq_grad[i] = eg;
        slot.sq_delta[i] = rho * slot.sq_delta[i] + (1.0 - rho) * delta * delta;
        param[i] += cfg.lr * delta;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta {
    pub config: AdadeltaConfig,
    pub slots: Vec<AdadeltaSlot>,
}

impl Adadelta {
    pub fn new(config: AdadeltaConfig, params: &ParamStore) -> Self {
        let slots = params.iter().map(|(_, _, t)| AdadeltaSlot::zeros(t.len())).collect();
        Adadelta { config, slots }
    }

    /// Updates every parameter that received a gradient; others are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Vec<f64>>]) -> Result<(), NnetError> {
        if grads.len() != params.len() || self.slots.len() != params.len() {
            return Err(NnetError::ShapeMismatch("optimizer/parameter count".into()));
        }
        for id in params.ids().collect::<Vec<_>>() {
            if let Some(g) = &grads[id.index()] {
                adadelta_step(
                    params.get_mut(id).data_mut(),
                    g,
                    &mut self.slots[id.index()],
                    &self.config,
                )?;
            }
        }
        Ok(())
    }
}
