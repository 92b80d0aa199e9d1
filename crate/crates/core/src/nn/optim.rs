//! Optimizers and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::nn::float::Float;
use crate::nn::tensor::ParamSet;

/// SGD with (PyTorch-style) momentum and L2 weight decay on `.weight` tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: ParamSet<T>,
}

impl<T: Float> Sgd<T> {
    pub fn new(params: &ParamSet<T>, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) {
        self.step_with(params, grads, |_| lr)
    }

    /// Step with a per-tensor learning rate.
    pub fn step_with(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: impl Fn(&str) -> f64) {
        let mu = T::of(self.momentum);
        for ((p, g), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.velocity.tensors)
        {
            let lr_t = lr(&p.name);
            if lr_t == 0.0 {
                continue;
            }
            let wd = T::of(if p.is_weight() { self.weight_decay } else { 0.0 });
            let lr_t = T::of(lr_t);
            for ((w, &gr), vel) in p.data.iter_mut().zip(&g.data).zip(&mut v.data) {
                let d = gr + wd * *w;
                *vel = mu * *vel + d;
                *w -= lr_t * *vel;
            }
        }
    }
}

/// Adam with optional L2 weight decay folded into the gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step_count: u64,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
}

impl<T: Float> Adam<T> {
    pub fn new(params: &ParamSet<T>, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step_count: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, eps) = (T::one(), T::of(self.eps));
        let step = T::of(lr / c1);
        let c2 = T::of(c2);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            let wd = T::of(if p.is_weight() { self.weight_decay } else { 0.0 });
            for (((w, &gr), mi), vi) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                let d = gr + wd * *w;
                *mi = b1 * *mi + (one - b1) * d;
                *vi = b2 * *vi + (one - b2) * d * d;
                *w -= step * *mi / ((*vi / c2).sqrt() + eps);
            }
        }
    }
}

/// Linear warmup followed by cosine decay to zero, in units of optimizer steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    /// `0.3 · batch / 256` base rate.
    pub fn linear_scaled(batch: usize) -> f64 {
        0.3 * batch as f64 / 256.0
    }

    pub fn at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps);
        if span == 0 {
            return self.base_lr;
        }
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * t).cos())
    }
}
