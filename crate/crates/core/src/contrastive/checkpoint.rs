//! Versioned binary checkpoints.
//!
//! Layout (little-endian):
//! `WVCK` | version u16 | config length u32 | config JSON |
//! parameter section | optimizer section | seed u64 | epoch u64 | step u64.
//!
//! A tensor section is a u32 count followed by, per tensor: name length u32,
//! UTF-8 name, rank u32, rank × u64 dims, row-major f32 values. The optimizer
//! section is a kind tag u8 (0 = SGD momentum), momentum f64, weight decay
//! f64 and the velocity tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrastive::train::{PretrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::nn::{Encoder, ParamSet, Sgd, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WVCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    pretrain: PretrainConfig,
    run: String,
}

fn put_tensors(out: &mut Vec<u8>, p: &ParamSet<f32>) {
    out.extend_from_slice(&(p.tensors.len() as u32).to_le_bytes());
    for t in &p.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.bytes.len() {
            return Err(Error::Format(format!("truncated checkpoint ({what})")));
        }
        let (a, b) = self.bytes.split_at(n);
        self.bytes = b;
        Ok(a)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format(format!("invalid UTF-8 in {what}")))
    }

    fn tensors(&mut self, what: &str) -> Result<ParamSet<f32>> {
        let count = self.u32(what)? as usize;
        let mut p = ParamSet::new();
        for _ in 0..count {
            let name = self.string(what)?;
            let rank = self.u32(what)? as usize;
            if rank > 8 {
                return Err(Error::Format(format!("tensor {name} has implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u64(what)? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("tensor {name} size overflow")))?;
            let raw = self.take(len, what)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            p.tensors.push(Tensor { name, shape, data });
        }
        Ok(p)
    }
}

impl TrainState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&Header {
            pretrain: self.config.clone(),
            run: self.provenance.clone(),
        })
        .expect("config serializes");
        let mut out = Vec::with_capacity(64 + header.len() + 8 * self.params.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        put_tensors(&mut out, &self.params);
        out.push(0);
        out.extend_from_slice(&self.optimizer.momentum.to_le_bytes());
        out.extend_from_slice(&self.optimizer.weight_decay.to_le_bytes());
        put_tensors(&mut out, &self.optimizer.velocity);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header: Header = serde_json::from_str(&r.string("config")?)
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let params = r.tensors("parameters")?;
        let kind = r.u8("optimizer kind")?;
        if kind != 0 {
            return Err(Error::Format(format!("unknown optimizer kind {kind}")));
        }
        let momentum = r.f64("optimizer")?;
        let weight_decay = r.f64("optimizer")?;
        let velocity = r.tensors("optimizer")?;
        let seed = r.u64("rng state")?;
        let epoch = r.u64("rng state")? as usize;
        let step = r.u64("rng state")?;
        if !r.bytes.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", r.bytes.len())));
        }
        let encoder = Encoder::new(header.pretrain.encoder.clone())?;
        encoder
            .check_params(&params)
            .map_err(|_| Error::Format("checkpoint tensors do not match its encoder config".into()))?;
        if !velocity.same_layout(&params) {
            return Err(Error::Format("optimizer state does not match parameters".into()));
        }
        Ok(TrainState {
            config: header.pretrain,
            encoder,
            params,
            optimizer: Sgd {
                momentum,
                weight_decay,
                velocity,
            },
            epoch,
            step,
            seed,
            provenance: header.run,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
