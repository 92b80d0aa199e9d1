//! Two-hidden-layer MLP probe trained with Adam on frozen embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{classification_loss, regression_loss, regression_loss_grad};
use crate::eval::{check_training_set, sigmoid, Standardizer, Task};
use crate::nn::mlp::Mlp;
use crate::nn::{Adam, ParamSet};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpProbeConfig {
    /// Hidden widths; `[2048, 2048]` is the full-scale setting.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl MlpProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "mlp probe hidden widths must be positive (default [256, 256]), got {:?}",
                self.hidden
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("mlp probe epochs and batch_size must be positive (defaults 200, 256)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "mlp probe learning_rate must be > 0 (default 0.001), got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MlpProbe {
    pub task: Task,
    pub config: MlpProbeConfig,
    pub standardizer: Standardizer,
    pub net: Mlp,
    pub params: ParamSet<f64>,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl MlpProbe {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], task: Task, config: MlpProbeConfig) -> Result<Self> {
        let (d, c) = check_training_set(x, y, task)?;
        config.validate()?;
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let mut dims = vec![d];
        dims.extend(&config.hidden);
        dims.push(c);
        let net = Mlp::new(dims)?;
        let mut rng = Rng::derive(config.seed, &[1]);
        let mut params = net.init_params::<f64>(&mut rng);
        // start the output at the prior: logit of prevalence, or the target mean
        let out_bias = params.tensors.len() - 1;
        params.tensors[out_bias - 1].data.fill(0.0);
        for k in 0..c {
            let mean = y.iter().map(|r| r[k]).sum::<f64>() / y.len() as f64;
            params.tensors[out_bias].data[k] = match task {
                Task::Classification => {
                    let p = mean.clamp(1e-3, 1.0 - 1e-3);
                    (p / (1.0 - p)).ln()
                }
                Task::Regression => mean,
            };
        }
        let mut opt = Adam::new(&params, 0.0);
        let n = xs.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            Rng::derive(config.seed, &[2, epoch as u64]).shuffle(&mut order);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let rows = chunk.len();
                let xb: Vec<f64> = chunk.iter().flat_map(|&i| xs[i].iter().copied()).collect();
                let yb: Vec<f64> = chunk.iter().flat_map(|&i| y[i].iter().copied()).collect();
                let cache = net.forward_cached(&params, &xb, rows, None);
                let (loss, dout) = loss_and_grad(task, &yb, &cache.output, rows);
                if !loss.is_finite() {
                    return Err(Error::Training(format!("mlp probe loss became non-finite in epoch {epoch}")));
                }
                total += loss;
                let (grads, _) = net.backward(&params, &cache, &dout, false);
                opt.step(&mut params, &grads, config.learning_rate);
            }
            epoch_losses.push(total / n as f64);
        }
        if !params.all_finite() {
            return Err(Error::Training("mlp probe parameters became non-finite".into()));
        }
        Ok(Self {
            task,
            config,
            standardizer,
            net,
            params,
            epoch_losses,
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let xs = self.standardizer.apply(x);
        let flat: Vec<f64> = xs.concat();
        let out = self.net.forward(&self.params, &flat, xs.len());
        out.chunks(self.net.output_dim())
            .map(|r| match self.task {
                Task::Classification => r.iter().map(|&z| sigmoid(z)).collect(),
                Task::Regression => r.to_vec(),
            })
            .collect()
    }
}

/// Summed batch loss and its gradient with respect to the raw outputs, divided by the batch size.
pub(crate) fn loss_and_grad(task: Task, y: &[f64], out: &[f64], rows: usize) -> (f64, Vec<f64>) {
    let b = rows as f64;
    match task {
        Task::Classification => {
            let p: Vec<f64> = out.iter().map(|&z| sigmoid(z)).collect();
            let grad = p.iter().zip(y).map(|(p, t)| (p - t) / b).collect();
            (classification_loss(y, &p), grad)
        }
        Task::Regression => {
            let grad = y.iter().zip(out).map(|(&t, &o)| regression_loss_grad(t, o) / b).collect();
            (regression_loss(y, out), grad)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_set(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = Rng::new(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
            x.push(vec![a * 2.0 - 1.0 + 0.2 * rng.normal(), b * 2.0 - 1.0 + 0.2 * rng.normal()]);
            y.push(vec![if a != b { 1.0 } else { 0.0 }]);
        }
        (x, y)
    }

    fn small() -> MlpProbeConfig {
        MlpProbeConfig {
            hidden: vec![16, 16],
            epochs: 150,
            learning_rate: 1e-2,
            batch_size: 32,
            seed: 3,
        }
    }

    #[test]
    fn learns_xor() {
        let (x, y) = xor_set(1, 200);
        let m = MlpProbe::fit(&x, &y, Task::Classification, small()).unwrap();
        let acc = m
            .predict(&x)
            .iter()
            .zip(&y)
            .filter(|(p, t)| (p[0] > 0.5) == (t[0] > 0.5))
            .count() as f64
            / 200.0;
        assert!(acc > 0.95, "accuracy {acc}");
        let decreasing = m.epoch_losses.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(decreasing as f64 >= 0.9 * (m.epoch_losses.len() - 1) as f64, "{decreasing}");
    }

    #[test]
    fn constant_target_regression() {
        let mut rng = Rng::new(2);
        let x: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let y = vec![vec![3.5]; 100];
        let m = MlpProbe::fit(&x, &y, Task::Regression, small()).unwrap();
        assert!(m.predict(&x).iter().all(|r| (r[0] - 3.5).abs() < 1e-2));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = xor_set(4, 40);
        let y: Vec<Vec<f64>> = y.iter().map(|r| vec![r[0] * 1e300]).collect();
        let cfg = MlpProbeConfig { epochs: 3, ..small() };
        match MlpProbe::fit(&x, &y, Task::Regression, cfg) {
            Err(Error::Training(_)) | Err(Error::Input(_)) => {}
            other => panic!("expected failure, got {:?}", other.map(|m| m.epoch_losses)),
        }
    }
}
