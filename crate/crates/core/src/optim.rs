//! Adam with bias correction, and exponential moving averages of weights.

use alloc::vec::Vec;

use crate::params::{Grads, ParamStore};
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam state for one parameter store. `t` counts completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Moments {
    pub fn zeros_like(store: &ParamStore) -> Self {
        let z = Grads::zeros_like(store).bufs;
        Moments {
            t: 0,
            m: z.clone(),
            v: z,
        }
    }

    fn matches(&self, store: &ParamStore) -> bool {
        self.m.len() == store.len()
            && self.v.len() == store.len()
            && store
                .tensors()
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(t, (m, v))| m.len() == t.len() && v.len() == t.len())
    }
}

/// One bias-corrected Adam step at step index `moments.t + 1`.
///
/// A non-finite gradient aborts the step before anything is modified.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Grads,
    moments: &mut Moments,
    cfg: &AdamConfig,
) -> Result<()> {
    if !moments.matches(params) || grads.bufs.len() != params.len() {
        return Err(Error::invalid(
            "adam_step",
            "gradient or moment layout differs from the parameters",
        ));
    }
    for (i, (buf, t)) in grads.bufs.iter().zip(params.tensors()).enumerate() {
        if buf.len() != t.len() {
            return Err(Error::shape("adam_step", t.shape(), &[buf.len()]));
        }
        if let Some(j) = buf.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: alloc::format!("gradient of {}", params.names()[i]),
                index: Some(j),
            });
        }
    }
    moments.t += 1;
    let step = moments.t as f64;
    let bc1 = 1.0 - math::pow(cfg.beta1, step);
    let bc2 = 1.0 - math::pow(cfg.beta2, step);
    for (k, t) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut moments.m[k], &mut moments.v[k], &grads.bufs[k]);
        for (i, p) in t.data_mut().iter_mut().enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *p -= cfg.lr * mhat / (math::sqrt(vhat) + cfg.eps);
        }
    }
    Ok(())
}

/// `ema ← ema + (1 − decay)(current − ema)`, i.e. `decay·ema + (1 − decay)·current`.
pub fn ema_update(ema: &mut ParamStore, current: &ParamStore, decay: f64) -> Result<()> {
    ema.check_layout(current)?;
    let w = 1.0 - decay;
    for (e, c) in ema.tensors_mut().iter_mut().zip(current.tensors()) {
        for (a, &b) in e.data_mut().iter_mut().zip(c.data()) {
            *a += w * (b - *a);
        }
    }
    Ok(())
}
