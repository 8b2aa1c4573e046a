//! Per-scene gradient fitting: reparameterized Gaussian attributes optimized
//! with Adam against rendered frames, plus the finite-difference oracle used
//! to validate the analytic gradients.

mod fd;
mod grad;
mod params;

pub use fd::{cutoff_margins, finite_diff, finite_diff_grad, FD_STEP_SCALE};
pub use grad::{forward_loss, loss_and_grad};
pub use params::{decode_params, encode_params, ParamVector, PARAM_STRIDE};

use serde::{Deserialize, Serialize};

use crate::camera::Frame;
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::model::GaussianScene;
use crate::render::RenderConfig;

/// Optimizer settings for [`fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: u32,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    /// Recorded in the trace; the optimizer itself is deterministic.
    pub seed: u64,
    pub render: RenderConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 2000,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
            seed: 0,
            render: RenderConfig::default(),
        }
    }
}

impl FitConfig {
    /// Zero iterations is allowed and returns the initialization unchanged.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be positive".to_string()));
        }
        if !(self.beta1 >= 0.0 && self.beta1 < 1.0 && self.beta2 >= 0.0 && self.beta2 < 1.0) {
            return Err(Error::domain("adam betas must lie in [0, 1)".to_string()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::domain("epsilon must be positive".to_string()));
        }
        self.weights.validate()?;
        self.render.validate()
    }
}

/// Loss history of a fit run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTrace {
    /// Loss evaluated at each iterate before its update, one per iteration.
    pub losses: Vec<f64>,
    /// Loss of the returned iterate. For a zero-iteration fit this is the
    /// initialization's loss and `losses` is empty.
    pub best_loss: f64,
    pub best_iteration: u32,
    pub seed: u64,
}

/// Optimizes `initial` against `frames` and returns the best-loss iterate.
///
/// The loss surface is evaluated with the warmup schedule applied per step,
/// so early iterations weight image fidelity over the regularizers. All
/// reductions are fixed-order; two runs with the same config produce
/// bit-identical traces regardless of thread count.
pub fn fit(
    initial: &GaussianScene,
    frames: &[Frame],
    cfg: &FitConfig,
) -> Result<(GaussianScene, FitTrace)> {
    cfg.validate()?;
    initial.validate()?;
    let mut pv = encode_params(initial);

    if cfg.iterations == 0 {
        let (loss, _) = forward_loss(&pv, frames, cfg, 0)?;
        return Ok((
            initial.clone(),
            FitTrace {
                losses: Vec::new(),
                best_loss: loss,
                best_iteration: 0,
                seed: cfg.seed,
            },
        ));
    }

    let dim = pv.data.len();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut losses = Vec::with_capacity(cfg.iterations as usize);
    let mut best_loss = f64::INFINITY;
    let mut best_iteration = 0u32;
    let mut best_data = pv.data.clone();

    for step in 0..cfg.iterations {
        let (loss, grad) = loss_and_grad(&pv, frames, cfg, u64::from(step))?;
        if !loss.is_finite() {
            let group = pv
                .first_non_finite()
                .or_else(|| grad.first_non_finite())
                .map_or("none (loss alone is non-finite)", |(_, g)| g);
            return Err(Error::NonFinite(group.to_string()));
        }
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_iteration = step;
            best_data.copy_from_slice(&pv.data);
        }

        let t = f64::from(step) + 1.0;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for i in 0..dim {
            let g = grad.data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            pv.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }

    pv.data = best_data;
    let fitted = decode_params(&pv);
    Ok((
        fitted,
        FitTrace {
            losses,
            best_loss,
            best_iteration,
            seed: cfg.seed,
        },
    ))
}
