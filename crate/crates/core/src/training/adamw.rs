use serde::{Deserialize, Serialize};

use super::{AdamWConfig, TrainError};
use crate::model::Parameters;
use crate::Real;

/// First and second moment estimates plus the number of steps taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<T> {
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        let zeros = params.map(|_, t| crate::autodiff::Tensor::zeros(t.shape()));
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay:
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p`.
pub fn adamw_step<T: Real>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut OptimizerState<T>,
    cfg: &AdamWConfig,
    lr: f64,
) -> Result<(), TrainError> {
    let names = params.names();
    let shapes_ok = params
        .values()
        .iter()
        .zip(grads.values())
        .position(|(p, g)| p.shape() != g.shape());
    if let Some(i) = shapes_ok {
        return Err(TrainError::ShapeMismatch {
            name: names[i].clone(),
            expected: params.values()[i].shape().to_vec(),
            found: grads.values()[i].shape().to_vec(),
        });
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let moments = state.m.values_mut().into_iter().zip(state.v.values_mut());
    for ((p, g), (m, v)) in params.values_mut().into_iter().zip(grads.values()).zip(moments) {
        let pd = p.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for (i, gi) in g.data().iter().enumerate() {
            let gi = gi.as_f64();
            let mi = cfg.beta1 * md[i].as_f64() + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * vd[i].as_f64() + (1.0 - cfg.beta2) * gi * gi;
            md[i] = T::of(mi);
            vd[i] = T::of(vi);
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let pi = pd[i].as_f64();
            pd[i] = T::of(pi - lr * m_hat / (v_hat.sqrt() + cfg.eps) - lr * cfg.weight_decay * pi);
        }
    }
    Ok(())
}
