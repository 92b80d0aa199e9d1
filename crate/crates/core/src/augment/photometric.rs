//! Intensity transforms: color jitter, Gaussian blur, inversion, sharpening.

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::Rng;

/// Jitter strengths; each factor is drawn from [max(0, 1 - s), 1 + s], hue from [-h, h].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterStrength {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl Default for JitterStrength {
    fn default() -> Self {
        Self {
            brightness: 0.8,
            contrast: 0.8,
            saturation: 0.8,
            hue: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterOp {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

/// Sampled jitter factors. Brightness and contrast carry one factor per channel
/// (all equal when channel-coupled).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    pub order: [JitterOp; 4],
    pub brightness: Vec<f64>,
    pub contrast: Vec<f64>,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            order: [JitterOp::Brightness, JitterOp::Contrast, JitterOp::Saturation, JitterOp::Hue],
            brightness: vec![1.0; channels],
            contrast: vec![1.0; channels],
            saturation: 1.0,
            hue: 0.0,
        }
    }
}

fn factor(rng: &mut Rng, s: f64) -> f64 {
    rng.uniform_range((1.0 - s).max(0.0), 1.0 + s)
}

pub fn sample_jitter(rng: &mut Rng, strength: &JitterStrength, channels: usize, coupled: bool) -> JitterParams {
    let mut order = [JitterOp::Brightness, JitterOp::Contrast, JitterOp::Saturation, JitterOp::Hue];
    rng.shuffle(&mut order);
    let per_channel = |rng: &mut Rng, s: f64| -> Vec<f64> {
        if coupled {
            vec![factor(rng, s); channels]
        } else {
            (0..channels).map(|_| factor(rng, s)).collect()
        }
    };
    let brightness = per_channel(rng, strength.brightness);
    let contrast = per_channel(rng, strength.contrast);
    let saturation = factor(rng, strength.saturation);
    let hue = rng.uniform_range(-strength.hue, strength.hue);
    JitterParams {
        order,
        brightness,
        contrast,
        saturation,
        hue,
    }
}

fn channels_equal(img: &Image) -> bool {
    (1..img.channels).all(|c| img.plane(c) == img.plane(0))
}

fn gray_plane(img: &Image) -> Vec<f32> {
    if img.channels == 3 {
        let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    } else {
        img.luminance()
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Apply sampled jitter. Saturation and hue leave images with identical channels untouched.
pub fn color_jitter(img: &Image, params: &JitterParams) -> Image {
    let mut out = img.clone();
    for op in params.order {
        match op {
            JitterOp::Brightness => {
                for c in 0..out.channels {
                    let f = params.brightness[c] as f32;
                    for v in out.plane_mut(c) {
                        *v = (*v * f).clamp(0.0, 1.0);
                    }
                }
            }
            JitterOp::Contrast => {
                let gray = gray_plane(&out);
                let mean = gray.iter().map(|&v| v as f64).sum::<f64>() / gray.len() as f64;
                for c in 0..out.channels {
                    let f = params.contrast[c];
                    for v in out.plane_mut(c) {
                        *v = ((*v as f64) * f + (1.0 - f) * mean).clamp(0.0, 1.0) as f32;
                    }
                }
            }
            JitterOp::Saturation => {
                if channels_equal(&out) || params.saturation == 1.0 {
                    continue;
                }
                let gray = gray_plane(&out);
                let f = params.saturation as f32;
                for c in 0..out.channels {
                    for (v, &g) in out.plane_mut(c).iter_mut().zip(&gray) {
                        *v = (*v * f + (1.0 - f) * g).clamp(0.0, 1.0);
                    }
                }
            }
            JitterOp::Hue => {
                if out.channels != 3 || channels_equal(&out) || params.hue == 0.0 {
                    continue;
                }
                let n = out.plane_len();
                for i in 0..n {
                    let (h, s, v) = rgb_to_hsv(out.data[i], out.data[n + i], out.data[2 * n + i]);
                    let (r, g, b) = hsv_to_rgb(h + params.hue as f32, s, v);
                    out.data[i] = r;
                    out.data[n + i] = g;
                    out.data[2 * n + i] = b;
                }
            }
        }
    }
    out
}

/// Normalized discrete Gaussian taps for offsets -r..=r, r = ceil(3σ).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Mirror an index into [0, n) with edge-duplicating (half-sample) symmetry.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_separable(plane: &[f32], h: usize, w: usize, taps: &[f64]) -> Vec<f32> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &t) in taps.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - r, w);
                acc += t * plane[y * w + sx] as f64;
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &t) in taps.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - r, h);
                acc += t * tmp[sy * w + x] as f64;
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Separable Gaussian blur with symmetric boundary extension.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let taps = gaussian_kernel(sigma);
    img.map_planes(|p| convolve_separable(p, img.height, img.width, &taps))
}

pub fn invert(img: &Image) -> Image {
    let mut out = img.clone();
    for v in &mut out.data {
        *v = 1.0 - *v;
    }
    out
}

/// 3×3 smoothing (centre weight 5, neighbours 1, /13); border pixels copied.
fn smooth3(plane: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = plane.to_vec();
    if h < 3 || w < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = 4.0 * plane[y * w + x];
            for dy in 0..3 {
                for dx in 0..3 {
                    acc += plane[(y + dy - 1) * w + (x + dx - 1)];
                }
            }
            out[y * w + x] = acc / 13.0;
        }
    }
    out
}

/// Unsharp blend: `img + amount·(img − smooth(img))`, clamped to [0, 1].
pub fn sharpen(img: &Image, amount: f32) -> Image {
    img.map_planes(|p| {
        let s = smooth3(p, img.height, img.width);
        p.iter()
            .zip(&s)
            .map(|(&v, &b)| (v + amount * (v - b)).clamp(0.0, 1.0))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64, side: usize) -> Image {
        let mut rng = Rng::new(seed);
        let plane: Vec<f32> = (0..side * side).map(|_| rng.uniform() as f32).collect();
        Image::from_plane(side, side, &plane, 3)
    }

    #[test]
    fn unit_factors_are_identity() {
        let img = noise(1, 16);
        let out = color_jitter(&img, &JitterParams::identity(3));
        assert_eq!(out, img);
    }

    #[test]
    fn brightness_halves_constant() {
        let img = Image::filled(3, 8, 8, 0.8);
        let mut p = JitterParams::identity(3);
        p.brightness = vec![0.5; 3];
        let out = color_jitter(&img, &p);
        assert!(out.data.iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn saturation_and_hue_noop_on_gray() {
        let img = noise(2, 16);
        let mut p = JitterParams::identity(3);
        p.saturation = 0.3;
        p.hue = 0.15;
        assert_eq!(color_jitter(&img, &p), img);
    }

    #[test]
    fn hue_rotates_color() {
        let img = Image::from_data(3, 1, 1, vec![0.8, 0.2, 0.2]).unwrap();
        let mut p = JitterParams::identity(3);
        p.hue = 1.0 / 3.0;
        let out = color_jitter(&img, &p);
        assert!((out.data[1] - 0.8).abs() < 1e-5, "{:?}", out.data);
    }

    #[test]
    fn jitter_keeps_range() {
        let img = noise(3, 16);
        let mut rng = Rng::new(4);
        for _ in 0..100 {
            let p = sample_jitter(&mut rng, &JitterStrength::default(), 3, true);
            let out = color_jitter(&img, &p);
            assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(out.plane(0), out.plane(2));
        }
    }

    #[test]
    fn blur_constant_and_variance() {
        let c = Image::filled(1, 20, 20, 0.6);
        let out = gaussian_blur(&c, 0.1);
        assert!(out.data.iter().all(|&v| (v - 0.6).abs() < 1e-6));
        for seed in 0..10 {
            let img = noise(seed, 24);
            for sigma in [0.1, 0.7, 2.0] {
                let b = gaussian_blur(&img, sigma);
                assert!(b.variance() <= img.variance() + 1e-9);
            }
        }
    }

    #[test]
    fn blur_impulse_matches_closed_form() {
        let side = 31;
        let sigma = 1.3;
        let mut plane = vec![0.0f32; side * side];
        plane[15 * side + 15] = 1.0;
        let out = gaussian_blur(&Image::from_plane(side, side, &plane, 1), sigma);
        let r = (3.0f64 * sigma).ceil() as i64;
        let norm: f64 = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).sum();
        for y in 0..side as i64 {
            for x in 0..side as i64 {
                let (dy, dx) = (y - 15, x - 15);
                let expect = if dy.abs() <= r && dx.abs() <= r {
                    (-(dy * dy + dx * dx) as f64 / (2.0 * sigma * sigma)).exp() / (norm * norm)
                } else {
                    0.0
                };
                let got = out.at(0, y as usize, x as usize) as f64;
                assert!((got - expect).abs() < 1e-6, "({y},{x}) {got} vs {expect}");
            }
        }
    }

    #[test]
    fn invert_twice_identity() {
        let img = Image::from_plane(1, 4, &[0.0, 0.25, 0.5, 1.0], 1);
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn sharpen_constant_unchanged() {
        let img = Image::filled(3, 10, 10, 0.4);
        let s = sharpen(&img, 0.5);
        assert!(s.data.iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }
}
