use std::collections::BTreeMap;

use super::autograd::{Grads, Mat, ParamId, ParamStore};

/// Adam over a fixed subset of a parameter store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    params: Vec<ParamId>,
    t: u64,
    m: BTreeMap<ParamId, Mat>,
    v: BTreeMap<ParamId, Mat>,
}

impl Adam {
    pub fn new(params: impl IntoIterator<Item = ParamId>, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            params: params.into_iter().collect(),
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// One update. Parameters without a gradient keep their moments.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr * bc2.sqrt() / bc1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for &id in &self.params {
            let Some(g) = grads.get(id) else { continue };
            let m = self.m.entry(id).or_insert_with(|| Mat::zeros(g.dim()));
            let v = self.v.entry(id).or_insert_with(|| Mat::zeros(g.dim()));
            let w = store.get_mut(id);
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step * *m / (v.sqrt() + eps * bc2.sqrt());
            });
        }
    }
}
