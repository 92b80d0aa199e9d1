//! Residual CNN backbone plus two-layer projection head.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::float::Float;
use crate::nn::layers::{self, BatchNormCache, ConvGeom, NormCache};
use crate::nn::tensor::ParamSet;
use crate::rng::Rng;

/// Samples per gradient-accumulation chunk. Fixed so that the reduction order,
/// and therefore the summed gradient, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

/// Weight of the previous value in the projector's running batch statistics.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub width: usize,
    pub stride: usize,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_side: usize,
    pub input_channels: usize,
    pub stem_width: usize,
    pub stem_stride: usize,
    pub stages: Vec<StageConfig>,
    /// Group-norm groups per layer; 0 disables normalization (convolutions then carry biases).
    pub norm_groups: usize,
    pub projector_hidden: usize,
    /// Batch normalization on the projector's hidden layer (running statistics at inference).
    pub projector_batch_norm: bool,
    pub projection_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_side: 64,
            input_channels: 3,
            stem_width: 32,
            stem_stride: 2,
            stages: vec![
                StageConfig { width: 32, stride: 1, blocks: 1 },
                StageConfig { width: 64, stride: 2, blocks: 1 },
                StageConfig { width: 128, stride: 2, blocks: 1 },
                StageConfig { width: 256, stride: 2, blocks: 1 },
            ],
            norm_groups: 8,
            projector_hidden: 256,
            projector_batch_norm: true,
            projection_dim: 128,
        }
    }
}

impl EncoderConfig {
    /// Dimension of the backbone representation `h`.
    pub fn representation_dim(&self) -> usize {
        self.stages.last().map_or(self.stem_width, |s| s.width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("encoder: {msg}")));
        if self.input_side == 0 || self.input_channels == 0 || self.stem_width == 0 || self.stem_stride == 0 {
            return bad("input_side, input_channels, stem_width and stem_stride must be positive".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.width == 0 || s.stride == 0 || s.blocks == 0 {
                return bad(format!("stage {i}: width, stride and blocks must be positive"));
            }
        }
        if self.projector_hidden == 0 {
            return bad("projector_hidden must be positive (default 256)".into());
        }
        let rep = self.representation_dim();
        if self.projection_dim < 2 || rep < self.projection_dim {
            return bad(format!(
                "need representation_dim ({rep}) >= projection_dim ({}) >= 2 (default 256 >= 128)",
                self.projection_dim
            ));
        }
        if self.norm_groups > 0 {
            let widths = std::iter::once(self.stem_width).chain(self.stages.iter().map(|s| s.width));
            for w in widths {
                if w % self.norm_groups != 0 {
                    return bad(format!("width {w} not divisible by norm_groups {} (default 8)", self.norm_groups));
                }
            }
        }
        let mut side = self.input_side;
        for stride in std::iter::once(self.stem_stride).chain(self.stages.iter().map(|s| s.stride)) {
            side = (side - 1) / stride + 1;
        }
        if side == 0 {
            return bad("input too small for the configured strides".into());
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_side * self.input_side
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    geom: ConvGeom,
    w: usize,
    b: Option<usize>,
}

#[derive(Clone, Debug)]
struct NormLayer {
    gamma: usize,
    beta: usize,
    channels: usize,
    groups: usize,
}

#[derive(Clone, Debug)]
struct DenseLayer {
    w: usize,
    b: Option<usize>,
    out: usize,
}

#[derive(Clone, Debug)]
struct BatchNormLayer {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Clone, Debug)]
struct Block {
    conv1: ConvLayer,
    norm1: Option<NormLayer>,
    conv2: ConvLayer,
    norm2: Option<NormLayer>,
    shortcut: Option<ConvLayer>,
}

/// Backbone activations retained for the backward pass of one sample.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Vec<T>,
    stem_norm: Option<NormCache<T>>,
    stem_out: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    pub h: Vec<T>,
}

/// Projector activations of a training batch (rows in batch order).
#[derive(Clone, Debug)]
pub struct ProjectorCache<T> {
    rows: usize,
    h: Vec<T>,
    bn: Option<BatchNormCache<T>>,
    r1: Vec<T>,
    /// Row-major `rows × projection_dim`.
    pub z: Vec<T>,
}

/// Everything a training step keeps from its forward pass.
#[derive(Clone, Debug)]
pub struct TrainForward<T> {
    pub backbone: Vec<ForwardCache<T>>,
    pub projector: ProjectorCache<T>,
}

impl<T: Float> TrainForward<T> {
    pub fn z_rows(&self) -> Vec<Vec<T>> {
        let p = self.projector.z.len() / self.projector.rows;
        self.projector.z.chunks_exact(p).map(<[T]>::to_vec).collect()
    }
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    norm1: Option<NormCache<T>>,
    r1: Vec<T>,
    norm2: Option<NormCache<T>>,
    out: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    layout: ParamSet<f32>,
    stem: ConvLayer,
    stem_norm: Option<NormLayer>,
    blocks: Vec<Block>,
    fc1: DenseLayer,
    bn: Option<BatchNormLayer>,
    fc2: DenseLayer,
    final_pixels: usize,
}

struct Builder {
    layout: ParamSet<f32>,
    groups: usize,
}

impl Builder {
    fn conv(&mut self, name: &str, geom: ConvGeom, bias: bool) -> ConvLayer {
        let w = self.layout.push(
            format!("{name}.weight"),
            &[geom.out_c, geom.in_c, geom.kernel, geom.kernel],
        );
        let b = bias.then(|| self.layout.push(format!("{name}.bias"), &[geom.out_c]));
        ConvLayer { geom, w, b }
    }

    fn norm(&mut self, name: &str, channels: usize) -> Option<NormLayer> {
        (self.groups > 0).then(|| NormLayer {
            gamma: self.layout.push(format!("{name}.gamma"), &[channels]),
            beta: self.layout.push(format!("{name}.beta"), &[channels]),
            channels,
            groups: self.groups,
        })
    }

    fn dense(&mut self, name: &str, inp: usize, out: usize, bias: bool) -> DenseLayer {
        DenseLayer {
            w: self.layout.push(format!("{name}.weight"), &[out, inp]),
            b: bias.then(|| self.layout.push(format!("{name}.bias"), &[out])),
            out,
        }
    }
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let use_bias = config.norm_groups == 0;
        let mut b = Builder {
            layout: ParamSet::new(),
            groups: config.norm_groups,
        };
        let stem_geom = ConvGeom {
            in_c: config.input_channels,
            out_c: config.stem_width,
            kernel: 3,
            stride: config.stem_stride,
            pad: 1,
            in_h: config.input_side,
            in_w: config.input_side,
        };
        let stem = b.conv("stem.conv", stem_geom, use_bias);
        let stem_norm = b.norm("stem.norm", config.stem_width);
        let (mut side, mut ch) = (stem_geom.out_h(), config.stem_width);
        let mut blocks = Vec::new();
        for (si, stage) in config.stages.iter().enumerate() {
            for bi in 0..stage.blocks {
                let stride = if bi == 0 { stage.stride } else { 1 };
                let name = format!("stage{}.block{bi}", si + 1);
                let g1 = ConvGeom {
                    in_c: ch,
                    out_c: stage.width,
                    kernel: 3,
                    stride,
                    pad: 1,
                    in_h: side,
                    in_w: side,
                };
                let out_side = g1.out_h();
                let g2 = ConvGeom {
                    in_c: stage.width,
                    stride: 1,
                    in_h: out_side,
                    in_w: out_side,
                    ..g1
                };
                let conv1 = b.conv(&format!("{name}.conv1"), g1, use_bias);
                let norm1 = b.norm(&format!("{name}.norm1"), stage.width);
                let conv2 = b.conv(&format!("{name}.conv2"), g2, use_bias);
                let norm2 = b.norm(&format!("{name}.norm2"), stage.width);
                let shortcut = (stride != 1 || ch != stage.width).then(|| {
                    let gs = ConvGeom {
                        kernel: 1,
                        pad: 0,
                        ..g1
                    };
                    b.conv(&format!("{name}.shortcut"), gs, true)
                });
                blocks.push(Block {
                    conv1,
                    norm1,
                    conv2,
                    norm2,
                    shortcut,
                });
                side = out_side;
                ch = stage.width;
            }
        }
        // a bias in front of batch normalization is redundant
        let fc1 = b.dense("projector.fc1", ch, config.projector_hidden, !config.projector_batch_norm);
        let hidden = config.projector_hidden;
        let bn = config.projector_batch_norm.then(|| BatchNormLayer {
            gamma: b.layout.push("projector.bn.gamma", &[hidden]),
            beta: b.layout.push("projector.bn.beta", &[hidden]),
            mean: b.layout.push("projector.bn.running_mean", &[hidden]),
            var: b.layout.push("projector.bn.running_var", &[hidden]),
        });
        let fc2 = b.dense("projector.fc2", config.projector_hidden, config.projection_dim, true);
        Ok(Self {
            config,
            layout: b.layout,
            stem,
            stem_norm,
            blocks,
            fc1,
            bn,
            fc2,
            final_pixels: side * side,
        })
    }

    pub fn representation_dim(&self) -> usize {
        self.config.representation_dim()
    }

    pub fn projection_dim(&self) -> usize {
        self.config.projection_dim
    }

    /// Zero-valued parameters with this encoder's names and shapes.
    pub fn zero_params<T: Float>(&self) -> ParamSet<T> {
        self.layout.cast()
    }

    /// He-normal weights (unit-gain on the projector output), zero biases, unit norm scales,
    /// running statistics at (0, 1).
    pub fn init_params<T: Float>(&self, rng: &mut Rng) -> ParamSet<T> {
        let mut p = self.zero_params::<T>();
        let fc2_w = self.fc2.w;
        for (i, t) in p.tensors.iter_mut().enumerate() {
            if t.name.ends_with(".weight") {
                let fan_in: usize = t.shape[1..].iter().product();
                let gain = if i == fc2_w { 1.0 } else { 2.0 };
                let std = (gain / fan_in as f64).sqrt();
                t.data.iter_mut().for_each(|v| *v = T::of(rng.normal() * std));
            } else if t.name.ends_with(".gamma") || t.name.ends_with(".running_var") {
                t.data.fill(T::one());
            }
        }
        p
    }

    /// Whether `params` has this encoder's layout.
    pub fn check_params<T: Float>(&self, params: &ParamSet<T>) -> Result<()> {
        let ok = params.tensors.len() == self.layout.tensors.len()
            && params
                .tensors
                .iter()
                .zip(&self.layout.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if ok {
            Ok(())
        } else {
            Err(Error::Input("parameter set does not match the encoder configuration".into()))
        }
    }

    /// Names of the backbone tensors (everything before the projector).
    pub fn is_backbone(name: &str) -> bool {
        !name.starts_with("projector.")
    }

    fn conv<T: Float>(&self, l: &ConvLayer, p: &ParamSet<T>, x: &[T], col: &mut Vec<T>) -> Vec<T> {
        let bias = l.b.map(|b| p.tensors[b].data.as_slice());
        layers::conv_forward(x, &l.geom, &p.tensors[l.w].data, bias, col)
    }

    fn norm<T: Float>(&self, l: &Option<NormLayer>, p: &ParamSet<T>, x: Vec<T>) -> (Vec<T>, Option<NormCache<T>>) {
        match l {
            None => (x, None),
            Some(n) => {
                let (y, c) = layers::group_norm_forward(&x, n.channels, n.groups, &p.tensors[n.gamma].data, &p.tensors[n.beta].data);
                (y, Some(c))
            }
        }
    }

    fn check_input<T>(&self, input: &[T]) -> Result<()> {
        if input.len() != self.config.input_len() {
            return Err(Error::Input(format!(
                "encoder expects {}x{}x{} input ({} values), got {}",
                self.config.input_channels,
                self.config.input_side,
                self.config.input_side,
                self.config.input_len(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Forward one CHW sample, keeping what the backward pass needs.
    pub fn forward_cached<T: Float>(&self, params: &ParamSet<T>, input: &[T]) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let mut col = Vec::new();
        let a = self.conv(&self.stem, params, input, &mut col);
        let (mut stem_out, stem_norm) = self.norm(&self.stem_norm, params, a);
        layers::relu_inplace(&mut stem_out);

        let mut caches: Vec<BlockCache<T>> = Vec::with_capacity(self.blocks.len());
        for (bi, blk) in self.blocks.iter().enumerate() {
            let x: &[T] = if bi == 0 { &stem_out } else { &caches[bi - 1].out };
            let a1 = self.conv(&blk.conv1, params, x, &mut col);
            let (mut r1, norm1) = self.norm(&blk.norm1, params, a1);
            layers::relu_inplace(&mut r1);
            let a2 = self.conv(&blk.conv2, params, &r1, &mut col);
            let (mut out, norm2) = self.norm(&blk.norm2, params, a2);
            match &blk.shortcut {
                Some(s) => {
                    let sc = self.conv(s, params, x, &mut col);
                    out.iter_mut().zip(&sc).for_each(|(o, &v)| *o += v);
                }
                None => out.iter_mut().zip(x).for_each(|(o, &v)| *o += v),
            }
            layers::relu_inplace(&mut out);
            caches.push(BlockCache { norm1, r1, norm2, out });
        }

        let last = caches.last().map_or(&stem_out, |c| &c.out);
        let inv = T::one() / T::of(self.final_pixels as f64);
        let h: Vec<T> = last
            .chunks_exact(self.final_pixels)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(ForwardCache {
            input: input.to_vec(),
            stem_norm,
            stem_out,
            blocks: caches,
            h,
        })
    }

    fn dense<T: Float>(&self, l: &DenseLayer, p: &ParamSet<T>, x: &[T], rows: usize) -> Vec<T> {
        let zeros;
        let bias = match l.b {
            Some(b) => p.tensors[b].data.as_slice(),
            None => {
                zeros = vec![T::zero(); l.out];
                zeros.as_slice()
            }
        };
        layers::dense_forward(x, rows, &p.tensors[l.w].data, bias, l.out)
    }

    /// Projection of one representation with the running normalization statistics.
    pub fn project<T: Float>(&self, params: &ParamSet<T>, h: &[T]) -> Vec<T> {
        let mut a = self.dense(&self.fc1, params, h, 1);
        if let Some(n) = &self.bn {
            let t = |i: usize| params.tensors[i].data.as_slice();
            a = layers::batch_norm_apply(&a, t(n.mean), t(n.var), t(n.gamma), t(n.beta));
        }
        layers::relu_inplace(&mut a);
        self.dense(&self.fc2, params, &a, 1)
    }

    /// Projection of a training batch, normalized with its own statistics.
    pub fn project_batch<T: Float>(&self, params: &ParamSet<T>, hs: &[&[T]]) -> ProjectorCache<T> {
        let rows = hs.len();
        let h: Vec<T> = hs.concat();
        let a = self.dense(&self.fc1, params, &h, rows);
        let (mut r1, bn) = match &self.bn {
            Some(n) => {
                let (y, c) = layers::batch_norm_forward(&a, rows, &params.tensors[n.gamma].data, &params.tensors[n.beta].data);
                (y, Some(c))
            }
            None => (a, None),
        };
        layers::relu_inplace(&mut r1);
        let z = self.dense(&self.fc2, params, &r1, rows);
        ProjectorCache { rows, h, bn, r1, z }
    }

    /// Fold a batch's statistics into the running estimates.
    pub fn update_running_stats<T: Float>(&self, params: &mut ParamSet<T>, cache: &ProjectorCache<T>) {
        let (Some(n), Some(c)) = (&self.bn, &cache.bn) else { return };
        let m = T::of(BN_MOMENTUM);
        let blend = |dst: &mut [T], src: &[T]| {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = m * *d + (T::one() - m) * s);
        };
        blend(&mut params.tensors[n.mean].data, &c.mean);
        blend(&mut params.tensors[n.var].data, &c.var);
    }

    /// Accumulate projector gradients; returns d`h` (rows × representation_dim).
    pub fn project_backward<T: Float>(&self, params: &ParamSet<T>, cache: &ProjectorCache<T>, dz: &[T], grads: &mut ParamSet<T>) -> Vec<T> {
        let rows = cache.rows;
        let mut d1 = self.dense_backward(&self.fc2, params, &cache.r1, rows, dz, grads);
        layers::relu_backward_inplace(&mut d1, &cache.r1);
        if let (Some(n), Some(c)) = (&self.bn, &cache.bn) {
            let (lo, hi) = grads.tensors.split_at_mut(n.beta);
            d1 = layers::batch_norm_backward(&d1, rows, &params.tensors[n.gamma].data, c, &mut lo[n.gamma].data, &mut hi[0].data);
        }
        self.dense_backward(&self.fc1, params, &cache.h, rows, &d1, grads)
    }

    fn dense_backward<T: Float>(&self, l: &DenseLayer, p: &ParamSet<T>, x: &[T], rows: usize, dy: &[T], grads: &mut ParamSet<T>) -> Vec<T> {
        let mut scratch = Vec::new();
        let (dw, db) = match l.b {
            Some(b) => {
                let (lo, hi) = grads.tensors.split_at_mut(b);
                (&mut lo[l.w].data, &mut hi[0].data)
            }
            None => {
                scratch.resize(l.out, T::zero());
                (&mut grads.tensors[l.w].data, &mut scratch)
            }
        };
        layers::dense_backward(x, rows, &p.tensors[l.w].data, dy, l.out, dw, db, true).expect("input gradient requested")
    }

    /// Representation `h` and projection `z` of one sample.
    pub fn forward<T: Float>(&self, params: &ParamSet<T>, input: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let c = self.forward_cached(params, input)?;
        let z = self.project(params, &c.h);
        Ok((c.h, z))
    }

    fn conv_back<T: Float>(
        &self,
        l: &ConvLayer,
        p: &ParamSet<T>,
        x: &[T],
        dout: &[T],
        grads: &mut ParamSet<T>,
        want_dx: bool,
        col: &mut Vec<T>,
    ) -> Option<Vec<T>> {
        let (dw, db) = match l.b {
            Some(b) => {
                let (lo, hi) = grads.tensors.split_at_mut(b);
                (&mut lo[l.w].data, Some(hi[0].data.as_mut_slice()))
            }
            None => (&mut grads.tensors[l.w].data, None),
        };
        layers::conv_backward(x, &l.geom, &p.tensors[l.w].data, dout, dw, db, want_dx, col)
    }

    fn norm_back<T: Float>(
        &self,
        l: &Option<NormLayer>,
        p: &ParamSet<T>,
        cache: &Option<NormCache<T>>,
        dy: Vec<T>,
        grads: &mut ParamSet<T>,
    ) -> Vec<T> {
        match (l, cache) {
            (Some(n), Some(c)) => {
                let (lo, hi) = grads.tensors.split_at_mut(n.beta);
                layers::group_norm_backward(&dy, n.channels, n.groups, &p.tensors[n.gamma].data, c, &mut lo[n.gamma].data, &mut hi[0].data)
            }
            _ => dy,
        }
    }

    /// Accumulate backbone gradients of one sample given the upstream gradient on `h`.
    pub fn backward<T: Float>(&self, params: &ParamSet<T>, cache: &ForwardCache<T>, dh: &[T], grads: &mut ParamSet<T>) {
        let inv = T::one() / T::of(self.final_pixels as f64);
        let mut d: Vec<T> = dh
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv, self.final_pixels))
            .collect();

        let mut col = Vec::new();
        for bi in (0..self.blocks.len()).rev() {
            let blk = &self.blocks[bi];
            let bc = &cache.blocks[bi];
            let x = if bi == 0 { &cache.stem_out } else { &cache.blocks[bi - 1].out };
            layers::relu_backward_inplace(&mut d, &bc.out);
            let mut dx = match &blk.shortcut {
                Some(s) => self.conv_back(s, params, x, &d, grads, true, &mut col).unwrap(),
                None => d.clone(),
            };
            let da2 = self.norm_back(&blk.norm2, params, &bc.norm2, d, grads);
            let mut dr1 = self
                .conv_back(&blk.conv2, params, &bc.r1, &da2, grads, true, &mut col)
                .unwrap();
            layers::relu_backward_inplace(&mut dr1, &bc.r1);
            let da1 = self.norm_back(&blk.norm1, params, &bc.norm1, dr1, grads);
            let dmain = self
                .conv_back(&blk.conv1, params, x, &da1, grads, true, &mut col)
                .unwrap();
            dx.iter_mut().zip(&dmain).for_each(|(a, &b)| *a += b);
            d = dx;
        }
        layers::relu_backward_inplace(&mut d, &cache.stem_out);
        let da = self.norm_back(&self.stem_norm, params, &cache.stem_norm, d, grads);
        self.conv_back(&self.stem, params, &cache.input, &da, grads, false, &mut col);
    }

    /// Forward a batch of samples in parallel; row order follows `inputs`.
    pub fn forward_batch<T: Float>(&self, params: &ParamSet<T>, inputs: &[&[T]]) -> Result<Vec<(Vec<T>, Vec<T>)>> {
        inputs.par_iter().map(|x| self.forward(params, x)).collect()
    }

    pub fn forward_cached_batch<T: Float>(&self, params: &ParamSet<T>, inputs: &[&[T]]) -> Result<Vec<ForwardCache<T>>> {
        inputs.par_iter().map(|x| self.forward_cached(params, x)).collect()
    }

    /// Backbone forward of every sample, then the batch projector.
    pub fn forward_train<T: Float>(&self, params: &ParamSet<T>, inputs: &[&[T]]) -> Result<TrainForward<T>> {
        let backbone = self.forward_cached_batch(params, inputs)?;
        let hs: Vec<&[T]> = backbone.iter().map(|c| c.h.as_slice()).collect();
        let projector = self.project_batch(params, &hs);
        Ok(TrainForward { backbone, projector })
    }

    /// Gradients of a training batch given d`z` per row and optionally d`h`.
    pub fn backward_train<T: Float>(
        &self,
        params: &ParamSet<T>,
        fwd: &TrainForward<T>,
        dh: Option<&[Vec<T>]>,
        dz: &[Vec<T>],
    ) -> ParamSet<T> {
        let mut proj_grads = params.zeros_like();
        let dz_flat: Vec<T> = dz.concat();
        let dh_proj = self.project_backward(params, &fwd.projector, &dz_flat, &mut proj_grads);
        let dim = self.representation_dim();
        let dh_total: Vec<Vec<T>> = dh_proj
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, row)| match dh {
                Some(d) => row.iter().zip(&d[i]).map(|(&a, &b)| a + b).collect(),
                None => row.to_vec(),
            })
            .collect();
        let mut grads = self.backward_batch(params, &fwd.backbone, &dh_total);
        grads.add_assign(&proj_grads);
        grads
    }

    /// Summed backbone gradients over a batch.
    ///
    /// Samples are grouped into fixed chunks of [`GRAD_CHUNK`] processed in
    /// parallel and reduced in chunk order.
    pub fn backward_batch<T: Float>(&self, params: &ParamSet<T>, caches: &[ForwardCache<T>], dh: &[Vec<T>]) -> ParamSet<T> {
        let partials: Vec<ParamSet<T>> = caches
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut g = params.zeros_like();
                for (j, c) in chunk.iter().enumerate() {
                    let i = ci * GRAD_CHUNK + j;
                    self.backward(params, c, &dh[i], &mut g);
                }
                g
            })
            .collect();
        let mut total = params.zeros_like();
        for p in &partials {
            total.add_assign(p);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            input_side: 8,
            input_channels: 2,
            stem_width: 4,
            stem_stride: 1,
            stages: vec![StageConfig { width: 4, stride: 2, blocks: 1 }],
            norm_groups: 2,
            projector_hidden: 4,
            projector_batch_norm: true,
            projection_dim: 3,
        }
    }

    #[test]
    fn default_shapes() {
        let enc = Encoder::new(EncoderConfig::default()).unwrap();
        assert_eq!(enc.representation_dim(), 256);
        let p: ParamSet<f32> = enc.init_params(&mut Rng::new(0));
        let x = vec![0.5f32; 3 * 64 * 64];
        let (h, z) = enc.forward(&p, &x).unwrap();
        assert_eq!((h.len(), z.len()), (256, 128));
        assert!(h.iter().chain(&z).all(|v| v.is_finite()));
        assert!(enc.forward(&p, &x[1..]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = EncoderConfig::default();
        c.projection_dim = 512;
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::default();
        c.norm_groups = 3;
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::default();
        c.projection_dim = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_init_and_forward() {
        let enc = Encoder::new(tiny()).unwrap();
        let a: ParamSet<f64> = enc.init_params(&mut Rng::new(3));
        let b: ParamSet<f64> = enc.init_params(&mut Rng::new(3));
        assert_eq!(a, b);
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.1).sin()).collect();
        assert_eq!(enc.forward(&a, &x).unwrap(), enc.forward(&b, &x).unwrap());
    }

    fn loss_of(enc: &Encoder, p: &ParamSet<f64>, xs: &[Vec<f64>], w: &[f64]) -> f64 {
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let f = enc.forward_train(p, &refs).unwrap();
        let hs: f64 = f.backbone.iter().map(|c| c.h.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum();
        hs + f.projector.z.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (groups, bn) in [(0, false), (2, false), (2, true)] {
            let enc = Encoder::new(EncoderConfig {
                norm_groups: groups,
                projector_batch_norm: bn,
                ..tiny()
            })
            .unwrap();
            let p: ParamSet<f64> = enc.init_params(&mut Rng::new(5));
            let mut rng = Rng::new(6);
            let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..128).map(|_| rng.uniform()).collect()).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let f = enc.forward_train(&p, &refs).unwrap();
            let dh: Vec<Vec<f64>> = f.backbone.iter().map(|_| w.clone()).collect();
            let dz: Vec<Vec<f64>> = f.z_rows().iter().map(|z| z.iter().map(|v| 2.0 * v).collect()).collect();
            let g = enc.backward_train(&p, &f, Some(&dh), &dz);
            let eps = 1e-5;
            let mut worst = 0.0f64;
            for (ti, t) in p.tensors.iter().enumerate() {
                for j in 0..t.len() {
                    let mut plus = p.clone();
                    plus.tensors[ti].data[j] += eps;
                    let mut minus = p.clone();
                    minus.tensors[ti].data[j] -= eps;
                    let fd = (loss_of(&enc, &plus, &xs, &w) - loss_of(&enc, &minus, &xs, &w)) / (2.0 * eps);
                    let an = g.tensors[ti].data[j];
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    worst = worst.max(err);
                }
            }
            assert!(worst < 1e-4, "groups {groups} bn {bn}: worst relative error {worst}");
        }
    }
}
