//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }

    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config("optimizer.lr must be positive"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return Err(config("optimizer.beta1 must be in (0, 1)"));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(config("optimizer.beta2 must be in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(config("optimizer.eps must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(config("optimizer.weight_decay must be non-negative"));
        }
        Ok(())
    }
}

impl Default for AdamHyper {
    /// lr 2e-5 and weight decay 1e-7, with the usual beta/eps constants.
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            eps: Self::default_eps(),
            weight_decay: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

fn check_lengths(params: &[f64], grad: &[f64]) -> Result<()> {
    if params.len() != grad.len() {
        return Err(shape(format!(
            "params have {} entries, gradient has {}",
            params.len(),
            grad.len()
        )));
    }
    Ok(())
}

pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grad, lr)?;
    Ok(next)
}

pub fn sgd_step_in_place(params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    check_lengths(params, grad)?;
    for (p, g) in params.iter_mut().zip(grad.iter()) {
        *p -= lr * g;
    }
    Ok(())
}

/// One Adam update. The L2 term `weight_decay * params` is folded into the
/// gradient before the moment estimates are refreshed.
pub fn adam_step(
    state: &AdamState,
    params: &ParamVector,
    grad: &ParamVector,
    hyper: &AdamHyper,
) -> Result<(ParamVector, AdamState)> {
    let mut next = params.clone();
    let mut next_state = state.clone();
    adam_step_in_place(&mut next_state, &mut next, grad, hyper)?;
    Ok((next, next_state))
}

pub fn adam_step_in_place(
    state: &mut AdamState,
    params: &mut ParamVector,
    grad: &ParamVector,
    hyper: &AdamHyper,
) -> Result<()> {
    check_lengths(params, grad)?;
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(shape(format!(
            "optimizer state sized for {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i] + hyper.weight_decay * params[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

/// Optimizer choice as it appears in experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam(AdamHyper),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamHyper::default())
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Sgd { lr } if !(*lr >= 0.0 && lr.is_finite()) => {
                Err(config("optimizer.lr must be non-negative"))
            }
            OptimizerConfig::Sgd { .. } => Ok(()),
            OptimizerConfig::Adam(h) => h.validate(),
        }
    }

    /// Fresh optimizer for a parameter vector of `len` entries.
    pub fn start(&self, len: usize) -> Optimizer {
        match *self {
            OptimizerConfig::Sgd { lr } => Optimizer::Sgd { lr },
            OptimizerConfig::Adam(hyper) => Optimizer::Adam {
                hyper,
                state: AdamState::new(len),
            },
        }
    }
}

/// A running optimizer: configuration plus whatever state it accumulates.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { hyper: AdamHyper, state: AdamState },
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step_in_place(params, grad, *lr),
            Optimizer::Adam { hyper, state } => adam_step_in_place(state, params, grad, hyper),
        }
    }

    pub fn steps_taken(&self) -> Option<u64> {
        match self {
            Optimizer::Sgd { .. } => None,
            Optimizer::Adam { state, .. } => Some(state.t),
        }
    }
}
