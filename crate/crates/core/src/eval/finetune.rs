//! End-to-end finetuning of the backbone with a single linear head.
//!
//! Classification: sigmoid per class, one learning rate for all parameters.
//! Regression: dropout on the representation, softplus output, separate
//! backbone and head learning rates. The projector is dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{classification_loss, regression_loss, regression_loss_grad};
use crate::eval::{sigmoid, softplus, softplus_inverse, Task};
use crate::image::Image;
use crate::nn::mlp::Mlp;
use crate::nn::{Encoder, ParamSet, Sgd};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Classification learning rate for backbone and head.
    pub classification_lr: f64,
    pub regression_backbone_lr: f64,
    pub regression_head_lr: f64,
    pub regression_weight_decay: f64,
    pub regression_dropout: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 256,
            momentum: 0.9,
            classification_lr: 0.05,
            regression_backbone_lr: 0.007,
            regression_head_lr: 0.025,
            regression_weight_decay: 1e-6,
            regression_dropout: 0.5,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("finetune epochs and batch_size must be positive (defaults 10, 256)".into()));
        }
        let lrs = [self.classification_lr, self.regression_backbone_lr, self.regression_head_lr];
        if lrs.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("finetune learning rates must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.regression_dropout) {
            return Err(Error::Config(format!(
                "finetune regression_dropout must be in [0, 1) (default 0.5), got {}",
                self.regression_dropout
            )));
        }
        Ok(())
    }

    fn rates(&self, task: Task) -> (f64, f64) {
        match task {
            Task::Classification => (self.classification_lr, self.classification_lr),
            Task::Regression => (self.regression_backbone_lr, self.regression_head_lr),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinetuneModel {
    pub task: Task,
    pub config: FinetuneConfig,
    pub encoder: Encoder,
    pub params: ParamSet<f32>,
    pub head: Mlp,
    pub head_params: ParamSet<f32>,
    pub epoch_losses: Vec<f64>,
}

impl FinetuneModel {
    /// Outputs in target space: probabilities or positive regression values.
    pub fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        let inputs: Vec<&[f32]> = images.iter().map(|im| im.data.as_slice()).collect();
        let outs = self.encoder.forward_batch(&self.params, &inputs)?;
        let h: Vec<f32> = outs.into_iter().flat_map(|(h, _)| h).collect();
        let z = self.head.forward(&self.head_params, &h, images.len());
        Ok(z.chunks(self.head.output_dim())
            .map(|r| r.iter().map(|&v| self.activate(v as f64)).collect())
            .collect())
    }

    fn activate(&self, z: f64) -> f64 {
        match self.task {
            Task::Classification => sigmoid(z),
            Task::Regression => softplus(z),
        }
    }
}

/// Finetune a pretrained encoder on labelled images. `y` is N×C (C = 1 for regression).
pub fn finetune(
    encoder: &Encoder,
    pretrained: &ParamSet<f32>,
    images: &[Image],
    y: &[Vec<f64>],
    task: Task,
    config: FinetuneConfig,
) -> Result<FinetuneModel> {
    config.validate()?;
    encoder.check_params(pretrained)?;
    if images.is_empty() || images.len() != y.len() {
        return Err(Error::Input(format!("{} images but {} target rows", images.len(), y.len())));
    }
    let c = y[0].len();
    if task == Task::Regression && y.iter().flatten().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Input("softplus regression head needs positive finite targets".into()));
    }
    let head = Mlp::new(vec![encoder.representation_dim(), c])?;
    let mut head_params = head.init_params::<f32>(&mut Rng::derive(config.seed, &[1]));
    for k in 0..c {
        let mean = y.iter().map(|r| r[k]).sum::<f64>() / y.len() as f64;
        head_params.tensors[1].data[k] = match task {
            Task::Classification => {
                let p = mean.clamp(1e-3, 1.0 - 1e-3);
                (p / (1.0 - p)).ln() as f32
            }
            Task::Regression => softplus_inverse(mean) as f32,
        };
    }
    let mut params = pretrained.clone();
    let wd = match task {
        Task::Classification => 0.0,
        Task::Regression => config.regression_weight_decay,
    };
    let mut body_opt = Sgd::new(&params, config.momentum, wd);
    let mut head_opt = Sgd::new(&head_params, config.momentum, wd);
    let (body_lr, head_lr) = config.rates(task);
    let dropout = match task {
        Task::Classification => 0.0,
        Task::Regression => config.regression_dropout,
    };

    let n = images.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        Rng::derive(config.seed, &[2, epoch as u64]).shuffle(&mut order);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let rows = chunk.len();
            let inputs: Vec<&[f32]> = chunk.iter().map(|&i| images[i].data.as_slice()).collect();
            let caches = encoder.forward_cached_batch(&params, &inputs)?;
            let h: Vec<f32> = caches.iter().flat_map(|c| c.h.iter().copied()).collect();
            let mut drop_rng = Rng::derive(config.seed, &[3, epoch as u64, bi as u64]);
            let cache = head.forward_cached(&head_params, &h, rows, Some((dropout, &mut drop_rng)));
            let yb: Vec<f64> = chunk.iter().flat_map(|&i| y[i].iter().copied()).collect();
            let z: Vec<f64> = cache.output.iter().map(|&v| v as f64).collect();
            let (loss, dz) = match task {
                Task::Classification => {
                    let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
                    let d = p.iter().zip(&yb).map(|(p, t)| (p - t) / rows as f64).collect::<Vec<_>>();
                    (classification_loss(&yb, &p), d)
                }
                Task::Regression => {
                    let out: Vec<f64> = z.iter().map(|&v| softplus(v)).collect();
                    let d = yb
                        .iter()
                        .zip(&out)
                        .zip(&z)
                        .map(|((&t, &o), &zz)| regression_loss_grad(t, o) * sigmoid(zz) / rows as f64)
                        .collect::<Vec<_>>();
                    (regression_loss(&yb, &out), d)
                }
            };
            if !loss.is_finite() {
                return Err(Error::Training(format!("finetune loss became non-finite in epoch {epoch}")));
            }
            total += loss;
            let dz32: Vec<f32> = dz.iter().map(|&v| v as f32).collect();
            let (head_grads, dh) = head.backward(&head_params, &cache, &dz32, true);
            let dh = dh.expect("input gradient requested");
            let dh_rows: Vec<Vec<f32>> = dh.chunks(encoder.representation_dim()).map(|r| r.to_vec()).collect();
            let grads = encoder.backward_batch(&params, &caches, &dh_rows);
            if !grads.all_finite() || !head_grads.all_finite() {
                return Err(Error::Training(format!("non-finite finetune gradient in epoch {epoch}")));
            }
            body_opt.step_with(&mut params, &grads, |name| if Encoder::is_backbone(name) { body_lr } else { 0.0 });
            head_opt.step(&mut head_params, &head_grads, head_lr);
        }
        epoch_losses.push(total / n as f64);
    }
    Ok(FinetuneModel {
        task,
        config,
        encoder: encoder.clone(),
        params,
        head,
        head_params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{EncoderConfig, StageConfig};

    fn tiny_encoder() -> Encoder {
        Encoder::new(EncoderConfig {
            input_side: 8,
            input_channels: 1,
            stem_width: 4,
            stem_stride: 1,
            stages: vec![StageConfig { width: 8, stride: 2, blocks: 1 }],
            norm_groups: 2,
            projector_hidden: 8,
            projector_batch_norm: true,
            projection_dim: 4,
        })
        .unwrap()
    }

    fn images(n: usize, seed: u64) -> Vec<Image> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| {
                let plane: Vec<f32> = (0..64).map(|_| rng.uniform() as f32).collect();
                Image::from_plane(8, 8, &plane, 1)
            })
            .collect()
    }

    #[test]
    fn zero_rates_leave_parameters() {
        let enc = tiny_encoder();
        let p = enc.init_params::<f32>(&mut Rng::new(1));
        let imgs = images(6, 2);
        let y: Vec<Vec<f64>> = (0..6).map(|i| vec![(i % 2) as f64]).collect();
        let cfg = FinetuneConfig {
            epochs: 2,
            batch_size: 4,
            classification_lr: 0.0,
            ..Default::default()
        };
        let m = finetune(&enc, &p, &imgs, &y, Task::Classification, cfg).unwrap();
        assert_eq!(m.params, p);
    }

    #[test]
    fn regression_outputs_positive_and_loss_falls() {
        let enc = tiny_encoder();
        let p = enc.init_params::<f32>(&mut Rng::new(3));
        let imgs = images(16, 4);
        let y: Vec<Vec<f64>> = imgs.iter().map(|im| vec![0.5 + 2.0 * im.mean() as f64]).collect();
        let cfg = FinetuneConfig {
            epochs: 15,
            batch_size: 8,
            ..Default::default()
        };
        let m = finetune(&enc, &p, &imgs, &y, Task::Regression, cfg).unwrap();
        assert!(m.predict(&imgs).unwrap().iter().all(|r| r[0] > 0.0));
        assert!(m.epoch_losses.last().unwrap() < &m.epoch_losses[0]);
        let neg = vec![vec![-1.0]; 16];
        assert!(finetune(&enc, &p, &imgs, &neg, Task::Regression, FinetuneConfig::default()).is_err());
    }
}
