use serde::{Deserialize, Serialize};

use crate::diffcore::Real;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `g` to norm at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let n = l2_norm(g);
    if n > max_norm && n > 0.0 {
        let s = max_norm / n;
        g.iter_mut().for_each(|x| *x *= s);
    }
    n
}

/// Running per-feature mean and variance (parallel Welford merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
            clip: 10.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let d = self.dim();
        let mut bm = vec![0.0; d];
        for x in batch {
            for (m, v) in bm.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut bv = vec![0.0; d];
        for x in batch {
            for k in 0..d {
                bv[k] += (x[k] - bm[k]).powi(2) / n;
            }
        }
        if self.count == 0.0 {
            self.mean = bm;
            self.var = bv;
            self.count = n;
            return;
        }
        let tot = self.count + n;
        for k in 0..d {
            let delta = bm[k] - self.mean[k];
            let m2 = self.var[k] * self.count + bv[k] * n + delta * delta * self.count * n / tot;
            self.mean[k] += delta * n / tot;
            self.var[k] = m2 / tot;
        }
        self.count = tot;
    }

    /// `(x − mean)/√(var + 1e-8)`, clipped to `±clip`. The statistics enter
    /// as constants.
    pub fn apply<S: Real>(&self, x: &[S]) -> Vec<S> {
        let c = S::cst(self.clip);
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&v, (&m, &s))| ((v - m) / (s + 1e-8).sqrt()).clamp(-c, c))
            .collect()
    }
}
