//! Seeded synthetic texture corpus standing in for labelled wave-mode imagery.
//!
//! Every image carries a swell sinusoid whose wavelength is the regression
//! target, plus the texture of its class(es) and per-image nuisance
//! (gain, offset, speckle) that a useful representation has to ignore.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage8;
use crate::rng::Rng;
use crate::store::manifest::{Manifest, ManifestRecord, Split, TargetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureClass {
    /// Low-variance field: swell and noise only.
    Flat,
    /// Thin bright lines sharing an orientation.
    Streak,
    /// Scattered bright cells with darker rims.
    Cells,
    /// Dark meandering curves.
    Slick,
}

impl TextureClass {
    pub const ALL: [TextureClass; 4] = [
        TextureClass::Flat,
        TextureClass::Streak,
        TextureClass::Cells,
        TextureClass::Slick,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TextureClass::Flat => "flat",
            TextureClass::Streak => "streak",
            TextureClass::Cells => "cells",
            TextureClass::Slick => "slick",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub count: usize,
    pub side: usize,
    pub classes: Vec<TextureClass>,
    pub seed: u64,
    /// Probability that a non-flat image receives a second texture.
    pub multilabel_fraction: f64,
    pub swell_amplitude: f64,
    pub speckle: f64,
    pub gain: (f64, f64),
    pub offset: (f64, f64),
    /// Train and validation fractions; the remainder is test.
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 2000,
            side: 64,
            classes: TextureClass::ALL.to_vec(),
            seed: 0,
            multilabel_fraction: 0.2,
            swell_amplitude: 0.1,
            speckle: 0.08,
            gain: (0.5, 1.5),
            offset: (-0.15, 0.15),
            train_fraction: 0.6,
            val_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub id: String,
    pub pixels: GrayImage8,
    pub labels: Vec<TextureClass>,
    /// Swell wavelength in pixels.
    pub wavelength: f64,
    /// Integer swell frequency (cycles per image along x, y).
    pub swell_frequency: (i64, i64),
    pub split: Split,
}

fn render_streaks(field: &mut [f64], side: usize, rng: &mut Rng) {
    let s = side as f64;
    let theta = rng.uniform_range(0.0, PI);
    let lines = (side / 3).max(4);
    let width = 0.8 * s / 64.0;
    for _ in 0..lines {
        let ang = theta + 0.05 * rng.normal();
        let (dy, dx) = ang.sin_cos();
        let len = rng.uniform_range(s / 4.0, s / 2.0);
        let (cx, cy) = (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s));
        let amp = rng.uniform_range(0.12, 0.22);
        for y in 0..side {
            for x in 0..side {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                let t = (px * dx + py * dy).clamp(-len / 2.0, len / 2.0);
                let d2 = (px - t * dx).powi(2) + (py - t * dy).powi(2);
                if d2 < 16.0 * width * width {
                    field[y * side + x] += amp * (-d2 / (2.0 * width * width)).exp();
                }
            }
        }
    }
}

fn render_cells(field: &mut [f64], side: usize, rng: &mut Rng) {
    let s = side as f64;
    let scale = (s / 64.0).powi(2);
    let count = (rng.int_inclusive(6, 12) as f64 * scale).round().max(1.0) as usize;
    for _ in 0..count {
        let r = rng.uniform_range(s / 20.0, s / 10.0);
        let amp = rng.uniform_range(0.15, 0.3);
        let (cx, cy) = (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s));
        for y in 0..side {
            for x in 0..side {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 < 64.0 * r * r {
                    // zero-mean centre-surround profile
                    field[y * side + x] += amp * ((-d2 / (2.0 * r * r)).exp() - 0.25 * (-d2 / (8.0 * r * r)).exp());
                }
            }
        }
    }
}

fn render_slicks(field: &mut [f64], side: usize, rng: &mut Rng) {
    let s = side as f64;
    let curves = rng.int_inclusive(1, 3);
    for _ in 0..curves {
        let theta = rng.uniform_range(0.0, PI);
        let (ty, tx) = theta.sin_cos();
        let (ny, nx) = (tx, -ty);
        let offset = rng.uniform_range(-0.35 * s, 0.35 * s);
        let amp = rng.uniform_range(0.05 * s, 0.15 * s);
        let period = rng.uniform_range(0.5 * s, 1.2 * s);
        let phase = rng.uniform_range(0.0, 2.0 * PI);
        let width = rng.uniform_range(1.0, 2.0) * s / 64.0;
        let depth = rng.uniform_range(0.45, 0.65);
        let c = s / 2.0;
        for y in 0..side {
            for x in 0..side {
                let (px, py) = (x as f64 - c, y as f64 - c);
                let along = px * tx + py * ty;
                let across = px * nx + py * ny;
                let d = across - offset - amp * (2.0 * PI * along / period + phase).sin();
                let v = &mut field[y * side + x];
                *v *= 1.0 - depth * (-d * d / (2.0 * width * width)).exp();
            }
        }
    }
}

/// Integer frequency vectors with magnitude in `[side/32, side/8]`.
fn swell_candidates(side: usize) -> Vec<(i64, i64)> {
    let lo = (side as f64 / 32.0).max(1.0);
    let hi = (side as f64 / 8.0).max(lo);
    let r = hi.ceil() as i64;
    let mut out = Vec::new();
    for ky in 0..=r {
        for kx in -r..=r {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let m = ((kx * kx + ky * ky) as f64).sqrt();
            if m >= lo && m <= hi {
                out.push((kx, ky));
            }
        }
    }
    out
}

fn render_one(spec: &SynthSpec, index: usize, primary: TextureClass, split: Split) -> SynthImage {
    let side = spec.side;
    let s = side as f64;
    let mut rng = Rng::derive(spec.seed, &[index as u64]);
    let mut labels = vec![primary];
    let others: Vec<TextureClass> = spec
        .classes
        .iter()
        .copied()
        .filter(|&c| c != TextureClass::Flat && c != primary)
        .collect();
    let extra = rng.bernoulli(spec.multilabel_fraction);
    let pick = rng.below(others.len().max(1));
    if primary != TextureClass::Flat && extra && !others.is_empty() {
        labels.push(others[pick]);
    }

    let candidates = swell_candidates(side);
    let (kx, ky) = candidates[rng.below(candidates.len())];
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let mut field = vec![0.45; side * side];
    for y in 0..side {
        for x in 0..side {
            let arg = 2.0 * PI * (kx as f64 * x as f64 + ky as f64 * y as f64) / s + phase;
            field[y * side + x] += spec.swell_amplitude * arg.cos();
        }
    }
    let mut texture_rng = Rng::derive(spec.seed, &[index as u64, 1]);
    for &c in &labels {
        match c {
            TextureClass::Flat => {}
            TextureClass::Streak => render_streaks(&mut field, side, &mut texture_rng),
            TextureClass::Cells => render_cells(&mut field, side, &mut texture_rng),
            TextureClass::Slick => render_slicks(&mut field, side, &mut texture_rng),
        }
    }
    let gain = rng.uniform_range(spec.gain.0, spec.gain.1);
    let offset = rng.uniform_range(spec.offset.0, spec.offset.1);
    let pixels = field
        .iter()
        .map(|&v| {
            let v = (0.5 + gain * (v - 0.5) + offset) * (1.0 + spec.speckle * rng.normal());
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();
    labels.sort_by_key(|c| spec.classes.iter().position(|x| x == c));
    SynthImage {
        id: format!("syn{index:05}"),
        pixels: GrayImage8 {
            height: side,
            width: side,
            pixels,
        },
        labels,
        wavelength: s / ((kx * kx + ky * ky) as f64).sqrt(),
        swell_frequency: (kx, ky),
        split,
    }
}

/// Generate the corpus in memory. Classes are balanced on the primary label.
pub fn synth_images(spec: &SynthSpec) -> Result<Vec<SynthImage>> {
    if spec.classes.len() < 2 {
        return Err(Error::Config(format!(
            "synthetic corpus needs at least 2 classes, got {}",
            spec.classes.len()
        )));
    }
    if spec.side < 16 {
        return Err(Error::Config(format!("synthetic side {} too small (minimum 16)", spec.side)));
    }
    let mut order: Vec<usize> = (0..spec.count).collect();
    Rng::derive(spec.seed, &[u64::MAX]).shuffle(&mut order);
    let n_train = (spec.train_fraction * spec.count as f64).round() as usize;
    let n_val = (spec.val_fraction * spec.count as f64).round() as usize;
    let mut splits = vec![Split::Test; spec.count];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok((0..spec.count)
        .into_par_iter()
        .map(|i| render_one(spec, i, spec.classes[i % spec.classes.len()], splits[i]))
        .collect())
}

/// Write the corpus as PNGs under `dir/images` plus `dir/manifest.tsv`.
pub fn synth_dataset(spec: &SynthSpec, dir: &Path) -> Result<Manifest> {
    let images = synth_images(spec)?;
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    images
        .par_iter()
        .try_for_each(|im| im.pixels.save_png(&img_dir.join(format!("{}.png", im.id))))?;
    let manifest = Manifest {
        classes: spec.classes.iter().map(|c| c.name().to_string()).collect(),
        declared_classes: true,
        target: Some(TargetSpec {
            name: "wavelength".into(),
            unit: "px".into(),
        }),
        label_maps: Vec::new(),
        records: images
            .iter()
            .map(|im| ManifestRecord {
                path: PathBuf::from(format!("images/{}.png", im.id)),
                id: im.id.clone(),
                split: im.split,
                labels: im.labels.iter().map(|c| c.name().to_string()).collect(),
                target: Some(im.wavelength),
            })
            .collect(),
        base_dir: dir.to_path_buf(),
    };
    manifest.save(&dir.join("manifest.tsv"))?;
    Ok(manifest)
}
