//! Adam over named variables.
//!
//! candle ships optimizers, but their moment buffers are private; training
//! here needs to serialize optimizer state into checkpoints so that a
//! resumed run reproduces an uninterrupted one exactly. The update rule is
//! standard bias-corrected Adam.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Adam {
    vars: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    params: AdamParams,
}

impl Adam {
    pub fn new(vars: Vec<(String, Var)>, params: AdamParams) -> Result<Self> {
        let m = vars
            .iter()
            .map(|(_, v)| Tensor::zeros(v.shape(), v.dtype(), v.device()))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(Adam { vars, m, v, t: 0, params })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.params.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.params.lr
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let b1 = self.params.beta1;
        let b2 = self.params.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, (_, var)) in self.vars.iter().enumerate() {
            let Some(grad) = grads.get(var) else { continue };
            // Detach keeps the moment buffers free of autodiff history;
            // without it every step would extend the previous step's graph.
            let m = ((&self.m[i] * b1)? + (grad * (1.0 - b1))?)?.detach();
            let v = ((&self.v[i] * b2)? + (grad.sqr()? * (1.0 - b2))?)?.detach();
            let m_hat = (&m / bc1)?;
            let v_hat = (&v / bc2)?;
            let delta = (m_hat * self.params.lr)?.div(&(v_hat.sqrt()? + self.params.eps)?)?;
            var.set(&var.sub(&delta)?.detach())?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    /// Moment buffers as named tensors for checkpointing.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(self.vars.len() * 2);
        for (i, (name, _)) in self.vars.iter().enumerate() {
            out.push((format!("m::{name}"), self.m[i].clone()));
            out.push((format!("v::{name}"), self.v[i].clone()));
        }
        out
    }

    /// Restores moment buffers and the step counter.
    pub fn load_state(&mut self, t: u64, state: &HashMap<String, Tensor>) -> Result<()> {
        for (i, (name, _)) in self.vars.iter().enumerate() {
            let m = state
                .get(&format!("m::{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer moment m::{name}")))?;
            let v = state
                .get(&format!("v::{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer moment v::{name}")))?;
            if m.dims() != self.m[i].dims() || v.dims() != self.v[i].dims() {
                return Err(Error::Checkpoint(format!(
                    "optimizer state shape mismatch for {name}"
                )));
            }
            self.m[i] = m.clone();
            self.v[i] = v.clone();
        }
        self.t = t;
        Ok(())
    }
}
