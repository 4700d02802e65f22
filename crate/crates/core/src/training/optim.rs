use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::numcore::Tensor;

pub type GradMap = BTreeMap<String, Tensor>;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    u: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn adam(lr: f64) -> Self {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            u: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.m.get(name).map(Vec::as_slice)
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn adam_step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Contract(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (name, g) in grads {
            let n = g.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let u = self.u.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let theta = Arc::make_mut(params.get_mut(name).expect("checked above")).data_mut();
            for i in 0..n {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                u[i] = b2 * u[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let u_hat = u[i] / c2;
                theta[i] -= self.lr * m_hat / (u_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

pub fn global_norm(grads: &GradMap) -> f64 {
    grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Rescales all gradients so their joint L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GradMap, threshold: f64) -> Result<f64> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient for parameter {name}")));
    }
    let norm = global_norm(grads);
    if norm > threshold {
        let s = threshold / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    Ok(norm)
}
