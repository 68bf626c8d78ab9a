//! Adam parameter updates with bias correction.

use crate::graph::params::ParamStore;
use crate::tensor::Elem;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One Adam step over every trainable entry, using the gradients currently
/// stored in the parameter store. Non-trainable entries (running statistics)
/// are untouched. Increments the step counter.
pub fn adam_step<E: Elem>(params: &mut ParamStore<E>, lr: f64) {
    let t = params.step_count + 1;
    let beta1 = E::from_f64(ADAM_BETA1);
    let beta2 = E::from_f64(ADAM_BETA2);
    let one = E::one();
    let corr1 = E::from_f64(1.0 - ADAM_BETA1.powi(t as i32));
    let corr2 = E::from_f64(1.0 - ADAM_BETA2.powi(t as i32));
    let lr = E::from_f64(lr);
    let eps = E::from_f64(ADAM_EPS);
    for (_, p) in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        for i in 0..p.value.len() {
            let g = p.grad.data()[i];
            let m = beta1 * p.adam_m.data()[i] + (one - beta1) * g;
            let v = beta2 * p.adam_v.data()[i] + (one - beta2) * g * g;
            p.adam_m.data_mut()[i] = m;
            p.adam_v.data_mut()[i] = v;
            let m_hat = m / corr1;
            let v_hat = v / corr2;
            p.value.data_mut()[i] = p.value.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.step_count = t;
}
