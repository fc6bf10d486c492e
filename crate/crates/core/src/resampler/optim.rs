use serde::{Deserialize, Serialize};

use super::{ResamplerError, ResamplerParams, Result};

/// AdamW hyperparameters; the defaults are the pretraining values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Maximum global gradient norm; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            weight_decay: 5e-2,
            max_grad_norm: Some(1.0),
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ResamplerParams,
    pub v: ResamplerParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ResamplerParams) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// One AdamW update in place: clip the global gradient norm, update the
/// bias-corrected moments, then apply the step and decoupled weight decay.
pub fn adamw_step(
    params: &mut ResamplerParams,
    grads: &ResamplerParams,
    state: &mut AdamState,
    hyper: &AdamWConfig,
) -> Result<StepStats> {
    if !grads.is_finite() {
        return Err(ResamplerError::NumericalError("gradient contains NaN or Inf".into()));
    }
    for (name, (p, g)) in ResamplerParams::NAMES.iter().zip(params.tensors().into_iter().zip(grads.tensors())) {
        if p.dim() != g.dim() {
            return Err(ResamplerError::ShapeError(format!(
                "{name}: parameter {:?} vs gradient {:?}",
                p.dim(),
                g.dim()
            )));
        }
    }
    let grad_norm = grads.global_norm();
    let clip = match hyper.max_grad_norm {
        Some(max) if grad_norm > max => max / grad_norm,
        _ => 1.0,
    };

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()));
    for ((p, g), (m, v)) in tensors {
        ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            let g = g * clip;
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= hyper.lr * (m_hat / (v_hat.sqrt() + hyper.eps) + hyper.weight_decay * *p);
        });
    }
    Ok(StepStats { grad_norm, clipped: clip < 1.0 })
}
