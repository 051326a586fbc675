use super::model::{Gradients, ModelParams};
use crate::error::{AcnnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        Self::with_hyper(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.learnables().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

/// One bias-corrected Adam update followed by the `sigma_s >= SIGMA_MIN`
/// projection.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let g = grads.slices();
    let shapes_match = {
        let p = params.learnables();
        p.len() == g.len()
            && p.len() == state.first.len()
            && p.iter()
                .zip(&g)
                .zip(&state.first)
                .all(|((a, b), c)| a.len() == b.len() && a.len() == c.len())
    };
    if !shapes_match {
        return Err(AcnnError::ShapeMismatch(
            "gradient or optimizer state does not mirror parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((theta, grad), m), v) in params
        .learnables_mut()
        .into_iter()
        .zip(g)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..theta.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    params.radial.clamp_sigma();
    Ok(())
}
