use crate::numerics::{ParamStore, Tensor};

use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments per parameter, in store order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect();
        Self { m: zeros(), v: zeros(), t: 0, beta1: BETA1, beta2: BETA2, eps: EPSILON }
    }
}

/// One bias-corrected Adam update. `grads` is dense and in store order.
/// Non-trainable parameters are left alone. Nothing is modified if any
/// gradient entry is not finite.
pub fn adam_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(TrainError::Contract(format!(
            "{} gradients and {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    for ((_, p), g) in store.iter().zip(grads) {
        if g.shape() != p.tensor.shape() {
            return Err(TrainError::Contract(format!(
                "gradient of {} has shape {:?}, parameter has {:?}",
                p.name,
                g.shape(),
                p.tensor.shape()
            )));
        }
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(format!(
                "gradient of {} is {} at flat index {i}",
                p.name,
                g.data()[i]
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((_, p), g), (m, v)) in store.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        if !p.trainable {
            continue;
        }
        let w = p.tensor.data_mut();
        for (((w, &g), m), v) in w.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
