use std::collections::HashSet;
use std::sync::Arc;

use super::graph::Mat;
use super::params::{ParamId, ParamStore};

/// Adam without weight decay. Parameters in `frozen` are never updated.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Optional global-norm gradient clipping.
    pub clip_norm: Option<f64>,
    frozen: HashSet<ParamId>,
    step: u64,
    m: Vec<Option<Mat>>,
    v: Vec<Option<Mat>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            clip_norm: None,
            frozen: HashSet::new(),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn freeze(&mut self, id: ParamId) {
        self.frozen.insert(id);
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen.contains(&id)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Arc<Mat>>]) {
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        self.step += 1;
        let scale = match self.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|g| g.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for id in store.ids().collect::<Vec<_>>() {
            let Some(Some(grad)) = grads.get(id.index()) else {
                continue;
            };
            if self.frozen.contains(&id) {
                continue;
            }
            let m = self.m[id.index()].get_or_insert_with(|| Mat::zeros(grad.dim()));
            let v = self.v[id.index()].get_or_insert_with(|| Mat::zeros(grad.dim()));
            let param = store.get_mut(id);
            ndarray::Zip::from(param)
                .and(m)
                .and(v)
                .and(&**grad)
                .for_each(|p, m, v, &g| {
                    let g = g * scale;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                });
        }
    }
}
