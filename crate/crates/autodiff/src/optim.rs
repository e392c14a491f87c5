//! First-order optimizers over a flat list of parameter tensors.

use crate::tensor::Tensor;

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

pub trait Optimizer {
    /// Applies one update. `params` and `grads` are parallel.
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]);
}

/// Stochastic gradient descent with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((w, &d), vel) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vel = self.momentum * *vel + d;
                *w -= self.lr * *vel;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * d;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * d * d;
                *w -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(opt: &mut dyn Optimizer, steps: usize) -> f64 {
        // f(w) = sum (w - 3)^2
        let mut w = Tensor::zeros(&[4]);
        for _ in 0..steps {
            let g = Tensor::from_fn(&[4], |i| 2.0 * (w.data()[i] - 3.0));
            opt.step(&mut [&mut w], &[g]);
        }
        w.data().iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        assert!(minimize(&mut Sgd::new(0.1, 0.0), 200) < 1e-9);
        assert!(minimize(&mut Sgd::new(0.05, 0.9), 400) < 1e-6);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        assert!(minimize(&mut Adam::new(0.01), 3000) < 0.05);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Tensor::full(&[4], 3.0), Tensor::full(&[1], 4.0)];
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - (36.0f64 + 16.0).sqrt()).abs() < 1e-12);
        let after: f64 = g.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
        let mut small = vec![Tensor::full(&[1], 0.5)];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.5]);
    }
}
