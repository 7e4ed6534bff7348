//! Mini-batch Adam with lazy sparse updates for embedding rows.
//!
//! Rows of `θ` not touched by a batch keep their moment estimates as they
//! were; bias correction uses the global step count. The encoder is updated
//! densely every step.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::objective::{Gradients, Parameters};
use super::TrainError;
use crate::text::GruParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. `step` is the
/// 1-based step count used for bias correction.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(TrainError::Config("adam: parameter, gradient and moment shapes differ".into()));
    }
    if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite(format!("gradient component {g}")));
    }
    let t = step.max(1) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Moment accumulators mirroring [`Parameters`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    theta_m: Array2<f64>,
    theta_v: Array2<f64>,
    encoder_m: Option<GruParams>,
    encoder_v: Option<GruParams>,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        let zeros = |p: &GruParams| GruParams::zeros(p.hidden_dim(), p.input_dim());
        AdamState {
            step: 0,
            theta_m: Array2::zeros(params.theta.dim()),
            theta_v: Array2::zeros(params.theta.dim()),
            encoder_m: params.encoder.as_ref().map(zeros),
            encoder_v: params.encoder.as_ref().map(zeros),
        }
    }

    /// Apply one batch gradient. Nothing is modified if any gradient entry is
    /// non-finite.
    pub fn apply(&mut self, params: &mut Parameters, grads: &Gradients, cfg: &AdamConfig) -> Result<(), TrainError> {
        if !grads.is_finite() {
            return Err(TrainError::NonFinite(format!(
                "batch gradient at step {} contains NaN or infinity",
                self.step + 1
            )));
        }
        self.step += 1;
        for (&r, g) in &grads.rows {
            let r = r as usize;
            let mut p = params.theta.row_mut(r);
            let mut m = self.theta_m.row_mut(r);
            let mut v = self.theta_v.row_mut(r);
            adam_step(
                p.as_slice_mut().expect("row-major"),
                g.as_slice().expect("contiguous"),
                m.as_slice_mut().expect("row-major"),
                v.as_slice_mut().expect("row-major"),
                self.step,
                cfg,
            )?;
        }
        if let (Some(enc), Some(g), Some(em), Some(ev)) = (
            params.encoder.as_mut(),
            grads.encoder.as_ref(),
            self.encoder_m.as_mut(),
            self.encoder_v.as_mut(),
        ) {
            for (((p, g), m), v) in enc
                .matrices_mut()
                .into_iter()
                .zip(g.matrices())
                .zip(em.matrices_mut())
                .zip(ev.matrices_mut())
            {
                adam_step(
                    p.as_slice_mut().expect("standard layout"),
                    g.as_slice().expect("standard layout"),
                    m.as_slice_mut().expect("standard layout"),
                    v.as_slice_mut().expect("standard layout"),
                    self.step,
                    cfg,
                )?;
            }
        }
        Ok(())
    }
}
