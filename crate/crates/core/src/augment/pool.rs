//! Policy pool and two-view generation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::geometric::{self, CropRect, FlipParams};
use crate::augment::masking::{self, CutoutParams};
use crate::augment::notch::{self, NotchOutcome, NotchParams};
use crate::augment::photometric::{self, JitterParams, JitterStrength};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

/// Policy kinds in application order: geometric, then photometric, then destructive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    CropZoom,
    NoZoomCrop,
    Flip,
    #[serde(rename = "cvaug")]
    CVAug,
    ColorJitter,
    GaussianBlur,
    Cutout,
    NotchFilter,
    Mixup,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::CropZoom => "crop_zoom",
            PolicyKind::NoZoomCrop => "no_zoom_crop",
            PolicyKind::Flip => "flip",
            PolicyKind::CVAug => "cvaug",
            PolicyKind::ColorJitter => "color_jitter",
            PolicyKind::GaussianBlur => "gaussian_blur",
            PolicyKind::Cutout => "cutout",
            PolicyKind::NotchFilter => "notch_filter",
            PolicyKind::Mixup => "mixup",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropZoomConfig {
    pub probability: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl Default for CropZoomConfig {
    fn default() -> Self {
        Self {
            probability: 1.0,
            scale_min: 0.08,
            scale_max: 1.0,
            aspect_min: 3.0 / 4.0,
            aspect_max: 4.0 / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoZoomConfig {
    pub probability: f64,
    pub scale_min: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl Default for NoZoomConfig {
    fn default() -> Self {
        Self {
            probability: 1.0,
            scale_min: geometric::NO_ZOOM_SCALE.0,
            aspect_min: geometric::NO_ZOOM_ASPECT.0,
            aspect_max: geometric::NO_ZOOM_ASPECT.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipConfig {
    pub probability: f64,
    pub horizontal: f64,
    pub vertical: f64,
}

impl Default for FlipConfig {
    fn default() -> Self {
        Self {
            probability: 1.0,
            horizontal: 0.5,
            vertical: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    pub probability: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    /// Share brightness/contrast factors across channels.
    pub channel_coupled: bool,
}

impl Default for JitterConfig {
    fn default() -> Self {
        let s = JitterStrength::default();
        Self {
            probability: 0.8,
            brightness: s.brightness,
            contrast: s.contrast,
            saturation: s.saturation,
            hue: s.hue,
            channel_coupled: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurConfig {
    pub probability: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            sigma_min: 0.1,
            sigma_max: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoutConfig {
    pub probability: f64,
    #[serde(flatten)]
    pub params: CutoutParams,
}

impl Default for CutoutConfig {
    fn default() -> Self {
        Self {
            probability: 1.0,
            params: CutoutParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvAugConfig {
    pub probability: f64,
    pub invert_probability: f64,
    pub rotate_probability: f64,
    pub sharpen_probability: f64,
    pub max_rotation_deg: f64,
    pub sharpen_amount: f64,
}

impl Default for CvAugConfig {
    fn default() -> Self {
        Self {
            probability: 1.0,
            invert_probability: 0.5,
            rotate_probability: 0.5,
            sharpen_probability: 0.5,
            max_rotation_deg: 170.0,
            sharpen_amount: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotchConfig {
    pub probability: f64,
    #[serde(flatten)]
    pub params: NotchParams,
}

impl Default for NotchConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            params: NotchParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    pub probability: f64,
    pub strength_min: f64,
    pub strength_max: f64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            strength_min: 0.1,
            strength_max: 0.4,
        }
    }
}

/// One configured policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugPolicy {
    CropZoom(CropZoomConfig),
    NoZoomCrop(NoZoomConfig),
    Flip(FlipConfig),
    #[serde(rename = "cvaug")]
    CVAug(CvAugConfig),
    ColorJitter(JitterConfig),
    GaussianBlur(BlurConfig),
    Cutout(CutoutConfig),
    NotchFilter(NotchConfig),
    Mixup(MixupConfig),
}

impl AugPolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            AugPolicy::CropZoom(_) => PolicyKind::CropZoom,
            AugPolicy::NoZoomCrop(_) => PolicyKind::NoZoomCrop,
            AugPolicy::Flip(_) => PolicyKind::Flip,
            AugPolicy::CVAug(_) => PolicyKind::CVAug,
            AugPolicy::ColorJitter(_) => PolicyKind::ColorJitter,
            AugPolicy::GaussianBlur(_) => PolicyKind::GaussianBlur,
            AugPolicy::Cutout(_) => PolicyKind::Cutout,
            AugPolicy::NotchFilter(_) => PolicyKind::NotchFilter,
            AugPolicy::Mixup(_) => PolicyKind::Mixup,
        }
    }

    pub fn probability(&self) -> f64 {
        match self {
            AugPolicy::CropZoom(c) => c.probability,
            AugPolicy::NoZoomCrop(c) => c.probability,
            AugPolicy::Flip(c) => c.probability,
            AugPolicy::CVAug(c) => c.probability,
            AugPolicy::ColorJitter(c) => c.probability,
            AugPolicy::GaussianBlur(c) => c.probability,
            AugPolicy::Cutout(c) => c.probability,
            AugPolicy::NotchFilter(c) => c.probability,
            AugPolicy::Mixup(c) => c.probability,
        }
    }

    pub fn set_probability(&mut self, p: f64) {
        match self {
            AugPolicy::CropZoom(c) => c.probability = p,
            AugPolicy::NoZoomCrop(c) => c.probability = p,
            AugPolicy::Flip(c) => c.probability = p,
            AugPolicy::CVAug(c) => c.probability = p,
            AugPolicy::ColorJitter(c) => c.probability = p,
            AugPolicy::GaussianBlur(c) => c.probability = p,
            AugPolicy::Cutout(c) => c.probability = p,
            AugPolicy::NotchFilter(c) => c.probability = p,
            AugPolicy::Mixup(c) => c.probability = p,
        }
    }

    /// Check probability and parameter bounds.
    pub fn validate(&self) -> Result<()> {
        let name = self.kind().name();
        let in_unit = |what: &str, v: f64, default: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}.{what} = {v} outside [0, 1] (default {default})")))
            }
        };
        let ordered = |what: &str, lo: f64, hi: f64, min: f64, max: f64, defaults: (f64, f64)| -> Result<()> {
            if lo <= hi && lo >= min && hi <= max {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name}.{what} range [{lo}, {hi}] invalid, must lie in [{min}, {max}] (default [{}, {}])",
                    defaults.0, defaults.1
                )))
            }
        };
        in_unit("probability", self.probability(), 1.0)?;
        match self {
            AugPolicy::CropZoom(c) => {
                if c.scale_min <= 0.0 {
                    return Err(Error::Config(format!(
                        "{name}.scale_min must be > 0 (default 0.08), got {}",
                        c.scale_min
                    )));
                }
                ordered("scale", c.scale_min, c.scale_max, 0.0, 1.0, (0.08, 1.0))?;
                ordered("aspect", c.aspect_min, c.aspect_max, 1e-3, 1e3, (0.75, 4.0 / 3.0))?;
                if c.aspect_min <= 0.0 {
                    return Err(Error::Config(format!("{name}.aspect_min must be > 0")));
                }
            }
            AugPolicy::NoZoomCrop(c) => {
                ordered("scale", c.scale_min, 1.0, 0.9, 1.0, (0.9, 1.0))?;
                ordered("aspect", c.aspect_min, c.aspect_max, 1e-3, 1e3, NO_ZOOM_ASPECT_DEFAULT)?;
            }
            AugPolicy::Flip(c) => {
                in_unit("horizontal", c.horizontal, 0.5)?;
                in_unit("vertical", c.vertical, 0.5)?;
            }
            AugPolicy::CVAug(c) => {
                in_unit("invert_probability", c.invert_probability, 0.5)?;
                in_unit("rotate_probability", c.rotate_probability, 0.5)?;
                in_unit("sharpen_probability", c.sharpen_probability, 0.5)?;
                ordered("max_rotation_deg", 0.0, c.max_rotation_deg, 0.0, 180.0, (0.0, 170.0))?;
                ordered("sharpen_amount", 0.0, c.sharpen_amount, 0.0, 10.0, (0.0, 0.5))?;
            }
            AugPolicy::ColorJitter(c) => {
                for (what, v, d) in [
                    ("brightness", c.brightness, 0.8),
                    ("contrast", c.contrast, 0.8),
                    ("saturation", c.saturation, 0.8),
                ] {
                    if v < 0.0 {
                        return Err(Error::Config(format!("{name}.{what} must be >= 0 (default {d})")));
                    }
                }
                ordered("hue", 0.0, c.hue, 0.0, 0.5, (0.0, 0.2))?;
            }
            AugPolicy::GaussianBlur(c) => {
                if c.sigma_min <= 0.0 {
                    return Err(Error::Config(format!("{name}.sigma_min must be > 0 (default 0.1)")));
                }
                ordered("sigma", c.sigma_min, c.sigma_max, 0.0, 50.0, (0.1, 2.0))?;
            }
            AugPolicy::Cutout(c) => {
                in_unit("rect_probability", c.params.rect_probability, 0.5)?;
                ordered("area", c.params.area_min, c.params.area_max, 0.0, 1.0, (0.02, 0.30))?;
                if c.params.aspect_min <= 0.0 {
                    return Err(Error::Config(format!("{name}.aspect_min must be > 0 (default 0.3)")));
                }
                ordered("aspect", c.params.aspect_min, c.params.aspect_max, 0.0, 1e3, (0.3, 3.33))?;
            }
            AugPolicy::NotchFilter(c) => {
                if c.params.max_zeroed > c.params.candidates {
                    return Err(Error::Config(format!(
                        "{name}.max_zeroed ({}) exceeds candidates ({}) (defaults 15 of 30)",
                        c.params.max_zeroed, c.params.candidates
                    )));
                }
            }
            AugPolicy::Mixup(c) => {
                ordered("strength", c.strength_min, c.strength_max, 0.0, 1.0, (0.1, 0.4))?;
            }
        }
        Ok(())
    }
}

const NO_ZOOM_ASPECT_DEFAULT: (f64, f64) = geometric::NO_ZOOM_ASPECT;

/// Text configuration: one optional `[section]` per policy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_zoom: Option<CropZoomConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_zoom_crop: Option<NoZoomConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flip: Option<FlipConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cvaug: Option<CvAugConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color_jitter: Option<JitterConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_blur: Option<BlurConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutout: Option<CutoutConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notch_filter: Option<NotchConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixup: Option<MixupConfig>,
}

impl PoolConfig {
    /// Crop-and-zoom, flip, color jitter and blur with their standard settings.
    pub fn simclr_baseline() -> Self {
        Self {
            crop_zoom: Some(CropZoomConfig::default()),
            flip: Some(FlipConfig::default()),
            color_jitter: Some(JitterConfig::default()),
            gaussian_blur: Some(BlurConfig::default()),
            ..Default::default()
        }
    }

    pub fn with(mut self, kind: PolicyKind) -> Self {
        match kind {
            PolicyKind::CropZoom => self.crop_zoom = Some(Default::default()),
            PolicyKind::NoZoomCrop => self.no_zoom_crop = Some(Default::default()),
            PolicyKind::Flip => self.flip = Some(Default::default()),
            PolicyKind::CVAug => self.cvaug = Some(Default::default()),
            PolicyKind::ColorJitter => self.color_jitter = Some(Default::default()),
            PolicyKind::GaussianBlur => self.gaussian_blur = Some(Default::default()),
            PolicyKind::Cutout => self.cutout = Some(Default::default()),
            PolicyKind::NotchFilter => self.notch_filter = Some(Default::default()),
            PolicyKind::Mixup => self.mixup = Some(Default::default()),
        }
        self
    }

    pub fn without(mut self, kind: PolicyKind) -> Self {
        match kind {
            PolicyKind::CropZoom => self.crop_zoom = None,
            PolicyKind::NoZoomCrop => self.no_zoom_crop = None,
            PolicyKind::Flip => self.flip = None,
            PolicyKind::CVAug => self.cvaug = None,
            PolicyKind::ColorJitter => self.color_jitter = None,
            PolicyKind::GaussianBlur => self.gaussian_blur = None,
            PolicyKind::Cutout => self.cutout = None,
            PolicyKind::NotchFilter => self.notch_filter = None,
            PolicyKind::Mixup => self.mixup = None,
        }
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("augmentation pool: {e}")))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("pool config serializes")
    }

    /// Policies in canonical application order.
    pub fn policies(&self) -> Vec<AugPolicy> {
        let mut v = Vec::new();
        if let Some(c) = self.crop_zoom {
            v.push(AugPolicy::CropZoom(c));
        }
        if let Some(c) = self.no_zoom_crop {
            v.push(AugPolicy::NoZoomCrop(c));
        }
        if let Some(c) = self.flip {
            v.push(AugPolicy::Flip(c));
        }
        if let Some(c) = self.cvaug {
            v.push(AugPolicy::CVAug(c));
        }
        if let Some(c) = self.color_jitter {
            v.push(AugPolicy::ColorJitter(c));
        }
        if let Some(c) = self.gaussian_blur {
            v.push(AugPolicy::GaussianBlur(c));
        }
        if let Some(c) = self.cutout {
            v.push(AugPolicy::Cutout(c));
        }
        if let Some(c) = self.notch_filter {
            v.push(AugPolicy::NotchFilter(c));
        }
        if let Some(c) = self.mixup {
            v.push(AugPolicy::Mixup(c));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let policies = self.policies();
        if policies.is_empty() {
            return Err(Error::Config(
                "augmentation pool is empty (default: crop_zoom, flip, color_jitter, gaussian_blur)".into(),
            ));
        }
        policies.iter().try_for_each(AugPolicy::validate)
    }
}

/// Parameters drawn for one fired policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampledParams {
    Crop(CropRect),
    Flip(FlipParams),
    CvAug {
        invert: bool,
        rotation_deg: Option<f64>,
        sharpen: bool,
    },
    Jitter(JitterParams),
    Blur { sigma: f64 },
    Cutout { rects: Vec<CropRect> },
    Notch(NotchOutcome),
    Mixup { partner: usize, strength: f64 },
    /// Fired but had no effect (e.g. mixup in a batch of one).
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppliedPolicy {
    pub kind: PolicyKind,
    pub fired: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<SampledParams>,
}

/// Two augmented views per source image with full provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewBatch {
    pub views_a: Vec<Image>,
    pub views_b: Vec<Image>,
    pub provenance_a: Vec<Vec<AppliedPolicy>>,
    pub provenance_b: Vec<Vec<AppliedPolicy>>,
    pub source_ids: Vec<String>,
}

impl ViewBatch {
    pub fn len(&self) -> usize {
        self.views_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views_a.is_empty()
    }

    /// Views interleaved as positive pairs: a0, b0, a1, b1, ...
    pub fn interleaved(&self) -> Vec<&Image> {
        self.views_a
            .iter()
            .zip(&self.views_b)
            .flat_map(|(a, b)| [a, b])
            .collect()
    }
}

/// Apply one non-mixup policy; returns the new image and provenance.
pub fn apply_policy(img: &Image, policy: &AugPolicy, rng: &mut Rng) -> Result<(Image, AppliedPolicy)> {
    let kind = policy.kind();
    if !rng.bernoulli(policy.probability()) {
        return Ok((
            img.clone(),
            AppliedPolicy {
                kind,
                fired: false,
                params: None,
            },
        ));
    }
    let (out, params) = match policy {
        AugPolicy::CropZoom(c) => {
            let (o, r) = geometric::crop_zoom(img, rng, (c.scale_min, c.scale_max), (c.aspect_min, c.aspect_max));
            (o, SampledParams::Crop(r))
        }
        AugPolicy::NoZoomCrop(c) => {
            let (o, r) = geometric::crop_zoom(img, rng, (c.scale_min, 1.0), (c.aspect_min, c.aspect_max));
            (o, SampledParams::Crop(r))
        }
        AugPolicy::Flip(c) => {
            let f = geometric::sample_flip(rng, c.horizontal, c.vertical);
            (geometric::flip(img, f), SampledParams::Flip(f))
        }
        AugPolicy::CVAug(c) => {
            let invert = rng.bernoulli(c.invert_probability);
            let rotate = rng.bernoulli(c.rotate_probability);
            let angle = rng.uniform_range(-c.max_rotation_deg, c.max_rotation_deg);
            let sharpen = rng.bernoulli(c.sharpen_probability);
            let mut o = if invert { photometric::invert(img) } else { img.clone() };
            if rotate {
                o = geometric::rotate(&o, angle);
            }
            if sharpen {
                o = photometric::sharpen(&o, c.sharpen_amount as f32);
            }
            o.clamp01();
            (
                o,
                SampledParams::CvAug {
                    invert,
                    rotation_deg: rotate.then_some(angle),
                    sharpen,
                },
            )
        }
        AugPolicy::ColorJitter(c) => {
            let strength = JitterStrength {
                brightness: c.brightness,
                contrast: c.contrast,
                saturation: c.saturation,
                hue: c.hue,
            };
            let p = photometric::sample_jitter(rng, &strength, img.channels, c.channel_coupled);
            (photometric::color_jitter(img, &p), SampledParams::Jitter(p))
        }
        AugPolicy::GaussianBlur(c) => {
            let sigma = rng.uniform_range(c.sigma_min, c.sigma_max);
            (photometric::gaussian_blur(img, sigma), SampledParams::Blur { sigma })
        }
        AugPolicy::Cutout(c) => {
            let rects = masking::sample_cutout(rng, img.height, img.width, &c.params);
            (masking::cutout(img, &rects), SampledParams::Cutout { rects })
        }
        AugPolicy::NotchFilter(c) => {
            let (o, outcome) = notch::notch_filter(img, rng, &c.params)?;
            (o, SampledParams::Notch(outcome))
        }
        AugPolicy::Mixup(_) => {
            return Err(Error::Config("mixup needs the whole batch; use make_views".into()));
        }
    };
    Ok((
        out,
        AppliedPolicy {
            kind,
            fired: true,
            params: Some(params),
        },
    ))
}

const MIXUP_STREAM: u64 = 0x4D49_5855;

fn make_one_view(
    batch: &[Image],
    pool: &[AugPolicy],
    seed: u64,
    view: u64,
) -> Result<(Vec<Image>, Vec<Vec<AppliedPolicy>>)> {
    let per_image: Vec<(Image, Vec<AppliedPolicy>)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let mut rng = Rng::derive(seed, &[view, i as u64]);
            let mut cur = img.clone();
            let mut prov = Vec::with_capacity(pool.len());
            for p in pool.iter().filter(|p| p.kind() != PolicyKind::Mixup) {
                let (next, applied) = apply_policy(&cur, p, &mut rng)?;
                cur = next;
                prov.push(applied);
            }
            Ok((cur, prov))
        })
        .collect::<Result<_>>()?;
    let (mut images, mut provenance): (Vec<Image>, Vec<Vec<AppliedPolicy>>) = per_image.into_iter().unzip();

    if let Some(AugPolicy::Mixup(m)) = pool.iter().find(|p| p.kind() == PolicyKind::Mixup) {
        let pre_mix = images.clone();
        let n = pre_mix.len();
        for i in 0..n {
            let mut rng = Rng::derive(seed, &[view, i as u64, MIXUP_STREAM]);
            if !rng.bernoulli(m.probability) {
                provenance[i].push(AppliedPolicy {
                    kind: PolicyKind::Mixup,
                    fired: false,
                    params: None,
                });
                continue;
            }
            let strength = rng.uniform_range(m.strength_min, m.strength_max);
            if n < 2 {
                provenance[i].push(AppliedPolicy {
                    kind: PolicyKind::Mixup,
                    fired: true,
                    params: Some(SampledParams::Skipped {
                        reason: "batch of one has no mixup partner".into(),
                    }),
                });
                continue;
            }
            let mut partner = rng.below(n - 1);
            if partner >= i {
                partner += 1;
            }
            images[i] = masking::mixup(&pre_mix[i], &pre_mix[partner], strength as f32)?;
            provenance[i].push(AppliedPolicy {
                kind: PolicyKind::Mixup,
                fired: true,
                params: Some(SampledParams::Mixup { partner, strength }),
            });
        }
    }
    Ok((images, provenance))
}

/// Two independent augmentation passes over `batch`.
///
/// The result depends only on `(seed, batch, pool)`: each image draws from its
/// own derived stream, so thread scheduling does not affect it.
pub fn make_views(batch: &[Image], ids: &[String], pool: &[AugPolicy], seed: u64) -> Result<ViewBatch> {
    if batch.is_empty() {
        return Err(Error::Input("make_views: empty batch".into()));
    }
    if pool.is_empty() {
        return Err(Error::Config("make_views: empty augmentation pool".into()));
    }
    if ids.len() != batch.len() {
        return Err(Error::Input(format!(
            "make_views: {} ids for {} images",
            ids.len(),
            batch.len()
        )));
    }
    let mut pool = pool.to_vec();
    pool.sort_by_key(AugPolicy::kind);
    let (views_a, provenance_a) = make_one_view(batch, &pool, seed, 0)?;
    let (views_b, provenance_b) = make_one_view(batch, &pool, seed, 1)?;
    Ok(ViewBatch {
        views_a,
        views_b,
        provenance_a,
        provenance_b,
        source_ids: ids.to_vec(),
    })
}
