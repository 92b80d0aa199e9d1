//! Training state, the optimization step and the sub-sampled epoch loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{make_views, PoolConfig, ViewBatch};
use crate::contrastive::loss::nt_xent_loss;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{Encoder, EncoderConfig, LrSchedule, ParamSet, Sgd};
use crate::rng::{derive_seed, Rng};

const STREAM_INIT: u64 = 1;
const STREAM_SUBSET: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_VIEWS: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    /// Overrides the `0.3 · batch / 256` rule when set.
    pub base_lr: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    /// Fraction of the corpus visited per epoch.
    pub subsample_fraction: f64,
    /// Epochs between redraws of the sub-sample.
    pub subsample_period: usize,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub encoder: EncoderConfig,
    pub pool: PoolConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            temperature: 0.5,
            base_lr: None,
            momentum: 0.9,
            weight_decay: 1e-6,
            warmup_epochs: 10,
            subsample_fraction: 0.3,
            subsample_period: 20,
            checkpoint_every: 0,
            encoder: EncoderConfig::default(),
            pool: PoolConfig::simclr_baseline(),
        }
    }
}

impl PretrainConfig {
    pub fn learning_rate(&self) -> f64 {
        self.base_lr.unwrap_or_else(|| LrSchedule::linear_scaled(self.batch_size))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("pretrain: {m}")));
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be > 0 (default 0.5), got {}", self.temperature));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2 (default 128), got {}", self.batch_size));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!(
                "subsample_fraction must be in (0, 1] (default 0.3), got {}",
                self.subsample_fraction
            ));
        }
        if self.subsample_period == 0 {
            return bad("subsample_period must be positive (default 20)".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1) (default 0.9), got {}", self.momentum));
        }
        if self.weight_decay < 0.0 || !(self.learning_rate() >= 0.0) {
            return bad("learning rate and weight decay must be non-negative".into());
        }
        self.encoder.validate()?;
        self.pool.validate()
    }
}

/// Number of images visited per epoch.
pub fn subset_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(n.min(2), n)
}

/// Indices visited in `epoch`, in visiting order.
///
/// The subset is redrawn every `period` epochs; the order is reshuffled every epoch.
pub fn epoch_order(n: usize, fraction: f64, period: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let m = subset_size(n, fraction);
    let mut idx = if m >= n {
        (0..n).collect()
    } else {
        let mut v = Rng::derive(seed, &[STREAM_SUBSET, (epoch / period) as u64]).sample_indices(n, m);
        v.sort_unstable();
        v
    };
    Rng::derive(seed, &[STREAM_SHUFFLE, epoch as u64]).shuffle(&mut idx);
    idx
}

/// Mini-batches of an epoch order; a trailing batch with a single image is dropped.
pub fn epoch_batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    order.chunks(batch_size).filter(|b| b.len() >= 2).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: PretrainConfig,
    pub encoder: Encoder,
    pub params: ParamSet<f32>,
    pub optimizer: Sgd<f32>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub seed: u64,
    /// Resolved run configuration recorded for provenance.
    pub provenance: String,
}

impl TrainState {
    pub fn new(config: PretrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(config.encoder.clone())?;
        let params = encoder.init_params(&mut Rng::derive(seed, &[STREAM_INIT]));
        let optimizer = Sgd::new(&params, config.momentum, config.weight_decay);
        Ok(Self {
            config,
            encoder,
            params,
            optimizer,
            epoch: 0,
            step: 0,
            seed,
            provenance: String::new(),
        })
    }

    pub fn temperature(&self) -> f64 {
        self.config.temperature
    }

    pub fn schedule(&self, steps_per_epoch: usize) -> LrSchedule {
        LrSchedule {
            base_lr: self.config.learning_rate(),
            warmup_steps: (self.config.warmup_epochs * steps_per_epoch) as u64,
            total_steps: (self.config.epochs * steps_per_epoch) as u64,
        }
    }
}

/// One forward/backward/update on the NT-Xent loss of a view batch. Returns the loss.
pub fn train_step(state: &mut TrainState, views: &ViewBatch, lr: f64) -> Result<f64> {
    let inputs: Vec<&[f32]> = views.interleaved().into_iter().map(|im| im.data.as_slice()).collect();
    let fwd = state.encoder.forward_train(&state.params, &inputs)?;
    let z: Vec<Vec<f64>> = fwd
        .z_rows()
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let (loss, grad) = nt_xent_loss(&z, state.config.temperature)?;
    if !loss.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss {loss} at step {} (epoch {}, lr {lr}); parameter norm {:.4e}",
            state.step,
            state.epoch,
            state.params.l2_norm()
        )));
    }
    let dz: Vec<Vec<f32>> = grad
        .iter()
        .map(|g| g.iter().map(|&v| v as f32).collect())
        .collect();
    let grads = state.encoder.backward_train(&state.params, &fwd, None, &dz);
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient in {name} at step {} (loss {loss}, lr {lr})",
            state.step
        )));
    }
    state.optimizer.step(&mut state.params, &grads, lr);
    state.encoder.update_running_stats(&mut state.params, &fwd.projector);
    if let Some(name) = state.params.first_non_finite() {
        return Err(Error::Training(format!(
            "parameter {name} became non-finite at step {} (loss {loss}, lr {lr}, gradient norm {:.4e})",
            state.step,
            grads.l2_norm()
        )));
    }
    state.step += 1;
    Ok(loss)
}

/// Optional side channels of a pretraining run.
#[derive(Default)]
pub struct PretrainHooks<'a> {
    /// Checkpoint file, rewritten at the configured cadence and at the end.
    pub checkpoint: Option<&'a Path>,
    /// Line-delimited JSON step log.
    pub log: Option<&'a mut dyn Write>,
    /// Stop once this many epochs are complete (the run can be resumed later).
    pub stop_after: Option<usize>,
}

/// Run (or resume) pretraining until `config.epochs` epochs are complete.
///
/// Returns the mean loss of each epoch run by this call.
pub fn pretrain(state: &mut TrainState, images: &[Image], ids: &[String], mut hooks: PretrainHooks) -> Result<Vec<f64>> {
    if images.len() < 2 {
        return Err(Error::Input(format!("pretraining needs at least 2 images, got {}", images.len())));
    }
    if ids.len() != images.len() {
        return Err(Error::Input("image and id counts differ".into()));
    }
    let cfg = state.config.clone();
    let pool = cfg.pool.policies();
    let n = images.len();
    let steps_per_epoch = epoch_batches(&vec![0; subset_size(n, cfg.subsample_fraction)], cfg.batch_size).len();
    let schedule = state.schedule(steps_per_epoch);
    let started = Instant::now();
    let end = hooks.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    let mut epoch_losses = Vec::new();
    while state.epoch < end {
        let epoch = state.epoch;
        let order = epoch_order(n, cfg.subsample_fraction, cfg.subsample_period, state.seed, epoch);
        let mut total = 0.0;
        let batches = epoch_batches(&order, cfg.batch_size);
        for (bi, batch) in batches.iter().enumerate() {
            let imgs: Vec<Image> = batch.iter().map(|&i| images[i].clone()).collect();
            let bid: Vec<String> = batch.iter().map(|&i| ids[i].clone()).collect();
            let view_seed = derive_seed(state.seed, &[STREAM_VIEWS, epoch as u64, bi as u64]);
            let views = make_views(&imgs, &bid, &pool, view_seed)?;
            let lr = schedule.at(state.step);
            let loss = train_step(state, &views, lr)?;
            total += loss;
            if let Some(log) = hooks.log.as_deref_mut() {
                let rec = StepRecord {
                    epoch,
                    step: state.step,
                    loss,
                    lr,
                    wall_time: started.elapsed().as_secs_f64(),
                };
                let line = serde_json::to_string(&rec).expect("step record serializes");
                writeln!(log, "{line}").map_err(|e| Error::io("training log", e))?;
            }
        }
        state.epoch += 1;
        let mean = total / batches.len().max(1) as f64;
        log::info!("epoch {} loss {mean:.4}", state.epoch);
        epoch_losses.push(mean);
        if let Some(path) = hooks.checkpoint {
            if cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 && state.epoch < end {
                state.save(path)?;
            }
        }
    }
    if let Some(path) = hooks.checkpoint {
        state.save(path)?;
    }
    Ok(epoch_losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_schedule() {
        assert_eq!(subset_size(100, 0.3), 30);
        assert_eq!(subset_size(3, 0.1), 2);
        let full = epoch_order(10, 1.0, 20, 1, 0);
        let mut sorted = full.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        let set = |e| {
            let mut v = epoch_order(100, 0.3, 20, 7, e);
            v.sort();
            v
        };
        assert_eq!(set(0).len(), 30);
        assert_eq!(set(0), set(19));
        assert_ne!(set(19), set(20));
        assert_eq!(set(20), set(39));
        assert_ne!(set(39), set(40));
        assert_ne!(epoch_order(100, 0.3, 20, 7, 0), epoch_order(100, 0.3, 20, 7, 1));
    }

    #[test]
    fn batches_drop_singletons() {
        let order: Vec<usize> = (0..9).collect();
        let b = epoch_batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(epoch_batches(&order[..6], 4).len(), 2);
    }

    #[test]
    fn config_checks() {
        let mut c = PretrainConfig::default();
        assert!(c.validate().is_ok());
        assert!((c.learning_rate() - 0.15).abs() < 1e-15);
        c.temperature = 0.0;
        assert!(c.validate().is_err());
        let c = PretrainConfig {
            pool: PoolConfig::default(),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
