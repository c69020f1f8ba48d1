//! Parameter update rules. Plain SGD is the default; momentum and Adam are
//! options.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::model::{Grads, ModelParams};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd
    }
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer with per-tensor state in [`ModelParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    first: Vec<ArrayD<T>>,
    second: Vec<ArrayD<T>>,
    steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig, params: &ModelParams<T>) -> Self {
        let zeros = || -> Vec<ArrayD<T>> {
            params
                .tensors()
                .iter()
                .map(|(_, t)| ArrayD::zeros(t.raw_dim()))
                .collect()
        };
        let (first, second) = match cfg {
            OptimizerConfig::Sgd => (Vec::new(), Vec::new()),
            OptimizerConfig::Momentum { .. } => (zeros(), Vec::new()),
            OptimizerConfig::Adam { .. } => (zeros(), zeros()),
        };
        Optimizer {
            cfg,
            first,
            second,
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &Grads<T>, lr: f64) {
        self.steps += 1;
        let lr_t = T::lit(lr);
        let grads = grads.tensors();
        for (i, mut p) in params.tensors_mut().into_iter().enumerate() {
            let g = &grads[i].1;
            match self.cfg {
                OptimizerConfig::Sgd => p.zip_mut_with(g, |w, &d| *w -= lr_t * d),
                OptimizerConfig::Momentum { beta } => {
                    let b = T::lit(beta);
                    let m = &mut self.first[i];
                    m.zip_mut_with(g, |mv, &d| *mv = b * *mv + d);
                    p.zip_mut_with(m, |w, &mv| *w -= lr_t * mv);
                }
                OptimizerConfig::Adam { beta1, beta2, eps } => {
                    let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                    let c1 = T::lit(1.0 - beta1.powi(self.steps as i32));
                    let c2 = T::lit(1.0 - beta2.powi(self.steps as i32));
                    let e = T::lit(eps);
                    let one = T::one();
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    m.zip_mut_with(g, |mv, &d| *mv = b1 * *mv + (one - b1) * d);
                    v.zip_mut_with(g, |vv, &d| *vv = b2 * *vv + (one - b2) * d * d);
                    ndarray::Zip::from(&mut p).and(&*m).and(&*v).for_each(|w, &mv, &vv| {
                        *w -= lr_t * (mv / c1) / ((vv / c2).sqrt() + e);
                    });
                }
            }
        }
    }
}

/// Euclidean norm over every gradient entry.
pub fn grad_norm<T: Real>(grads: &Grads<T>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter().map(|v| v.as_f64() * v.as_f64()).collect::<Vec<_>>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
pub fn clip_grad_norm<T: Real>(grads: &mut Grads<T>, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        for mut t in grads.tensors_mut() {
            t.mapv_inplace(|v| v * s);
        }
    }
    norm
}
