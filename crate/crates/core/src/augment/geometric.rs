//! Crops, flips and rotation.

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::Rng;

/// Axis-aligned crop window in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Sample a crop with area fraction in `scale` and log-uniform aspect (w/h) in `aspect`.
///
/// Ten rejection attempts, then the full frame.
pub fn sample_crop(rng: &mut Rng, height: usize, width: usize, scale: (f64, f64), aspect: (f64, f64)) -> CropRect {
    let area = (height * width) as f64;
    let (log_lo, log_hi) = (aspect.0.ln(), aspect.1.ln());
    for _ in 0..10 {
        let target = area * rng.uniform_range(scale.0, scale.1);
        let ratio = rng.uniform_range(log_lo, log_hi).exp();
        let w = (target * ratio).sqrt().round() as usize;
        let h = (target / ratio).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let top = rng.int_inclusive(0, height - h);
            let left = rng.int_inclusive(0, width - w);
            return CropRect {
                top,
                left,
                height: h,
                width: w,
            };
        }
    }
    CropRect {
        top: 0,
        left: 0,
        height,
        width,
    }
}

/// Bilinear sample of `plane` (h×w) at fractional coordinates, clamped to the border.
fn sample_clamped(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = (y - y0 as f64) as f32;
    let fx = (x - x0 as f64) as f32;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Cut `rect` out of `img` and resample it to `out_h`×`out_w` (half-pixel-centre bilinear).
pub fn crop_resize(img: &Image, rect: CropRect, out_h: usize, out_w: usize) -> Image {
    let sy = rect.height as f64 / out_h as f64;
    let sx = rect.width as f64 / out_w as f64;
    let mut out = Image::new(img.channels, out_h, out_w);
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..out_h {
            let fy = rect.top as f64 + ((y as f64 + 0.5) * sy - 0.5).max(0.0);
            let fy = fy.min((rect.top + rect.height - 1) as f64);
            for x in 0..out_w {
                let fx = rect.left as f64 + ((x as f64 + 0.5) * sx - 0.5).max(0.0);
                let fx = fx.min((rect.left + rect.width - 1) as f64);
                dst[y * out_w + x] = sample_clamped(src, img.height, img.width, fy, fx);
            }
        }
    }
    out
}

/// Random resized crop back to the input size.
pub fn crop_zoom(img: &Image, rng: &mut Rng, scale: (f64, f64), aspect: (f64, f64)) -> (Image, CropRect) {
    let rect = sample_crop(rng, img.height, img.width, scale, aspect);
    (crop_resize(img, rect, img.height, img.width), rect)
}

pub const NO_ZOOM_SCALE: (f64, f64) = (0.90, 1.0);
pub const NO_ZOOM_ASPECT: (f64, f64) = (0.95, 1.05);

/// Crop covering at least 90% of the frame with near-unit aspect.
pub fn no_zoom_crop(img: &Image, rng: &mut Rng) -> (Image, CropRect) {
    crop_zoom(img, rng, NO_ZOOM_SCALE, NO_ZOOM_ASPECT)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipParams {
    pub horizontal: bool,
    pub vertical: bool,
}

pub fn sample_flip(rng: &mut Rng, p_horizontal: f64, p_vertical: f64) -> FlipParams {
    FlipParams {
        horizontal: rng.bernoulli(p_horizontal),
        vertical: rng.bernoulli(p_vertical),
    }
}

pub fn flip(img: &Image, params: FlipParams) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = Image::new(img.channels, h, w);
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            let sy = if params.vertical { h - 1 - y } else { y };
            for x in 0..w {
                let sx = if params.horizontal { w - 1 - x } else { x };
                dst[y * w + x] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Counter-clockwise rotation about the image centre, bilinear, zero fill outside.
pub fn rotate(img: &Image, angle_deg: f64) -> Image {
    let (h, w) = (img.height, img.width);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Image::new(img.channels, h, w);
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        let fetch = |yy: isize, xx: isize| -> f32 {
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                0.0
            } else {
                src[yy as usize * w + xx as usize]
            }
        };
        for y in 0..h {
            for x in 0..w {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                // inverse map: rotate the destination offset by -angle
                let sx = cos * dx - sin * dy + cx;
                let sy = sin * dx + cos * dy + cy;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = (sx - x0) as f32;
                let fy = (sy - y0) as f32;
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = fetch(y0, x0) * (1.0 - fx) * (1.0 - fy)
                    + fetch(y0, x0 + 1) * fx * (1.0 - fy)
                    + fetch(y0 + 1, x0) * (1.0 - fx) * fy
                    + fetch(y0 + 1, x0 + 1) * fx * fy;
                dst[y * w + x] = v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(side: usize) -> Image {
        let plane: Vec<f32> = (0..side * side)
            .map(|i| ((i / side) + (i % side)) as f32 / (2 * side) as f32)
            .collect();
        Image::from_plane(side, side, &plane, 3)
    }

    #[test]
    fn full_crop_is_identity() {
        let img = ramp(64);
        let mut rng = Rng::new(1);
        let (out, rect) = crop_zoom(&img, &mut rng, (1.0, 1.0), (1.0, 1.0));
        assert_eq!(rect.height, 64);
        let max = img.data.iter().zip(&out.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(max <= 1.0 / 255.0);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::filled(3, 40, 40, 0.3);
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let (out, _) = crop_zoom(&img, &mut rng, (0.08, 1.0), (0.75, 4.0 / 3.0));
            assert!(out.data.iter().all(|&v| (v - 0.3).abs() < 1e-6));
        }
    }

    #[test]
    fn crop_stays_in_bounds_and_scale() {
        let mut rng = Rng::new(3);
        for _ in 0..2000 {
            let r = sample_crop(&mut rng, 64, 64, (0.08, 1.0), (0.75, 4.0 / 3.0));
            assert!(r.top + r.height <= 64 && r.left + r.width <= 64);
            assert!(r.height > 0 && r.width > 0);
        }
    }

    #[test]
    fn no_zoom_offset_bounded() {
        let img = ramp(100);
        let mut rng = Rng::new(4);
        for _ in 0..2000 {
            let (_, r) = no_zoom_crop(&img, &mut rng);
            assert!(r.top <= 10 && r.left <= 10, "{r:?}");
            assert!((r.height * r.width) as f64 >= 0.9 * 10_000.0 - 200.0);
        }
        let (out, _) = crop_zoom(&img, &mut rng, (1.0, 1.0), NO_ZOOM_ASPECT);
        assert_eq!(out, img);
    }

    #[test]
    fn no_zoom_preserves_mean() {
        let mut rng = Rng::new(5);
        let side = 64;
        let mut bad = 0;
        for t in 0..1000 {
            let phase = t as f32 * 0.1;
            let plane: Vec<f32> = (0..side * side)
                .map(|i| {
                    let (y, x) = ((i / side) as f32, (i % side) as f32);
                    0.5 + 0.3 * ((x * 0.3 + phase).sin() * (y * 0.2).cos())
                })
                .collect();
            let img = Image::from_plane(side, side, &plane, 1);
            let (out, _) = no_zoom_crop(&img, &mut rng);
            if (out.mean() - img.mean()).abs() > 0.1 * img.mean() {
                bad += 1;
            }
        }
        assert_eq!(bad, 0);
    }

    #[test]
    fn flip_involution_and_symmetric() {
        let img = ramp(8);
        let p = FlipParams {
            horizontal: true,
            vertical: true,
        };
        assert_eq!(flip(&flip(&img, p), p), img);
        // the diagonal ramp is symmetric under the combined flip up to reversal
        let sym = Image::from_plane(2, 2, &[0.2, 0.5, 0.5, 0.2], 1);
        let both = flip(&sym, p);
        assert_eq!(both, sym);
    }

    #[test]
    fn flip_outcomes_uniform() {
        let mut rng = Rng::new(6);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let f = sample_flip(&mut rng, 0.5, 0.5);
            counts[(f.horizontal as usize) * 2 + f.vertical as usize] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0)
            .sum();
        // chi-square, 3 dof, p = 0.01 critical value
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn rotate_zero_is_identity_and_back_rotation() {
        let side = 64;
        let plane: Vec<f32> = (0..side * side)
            .map(|i| {
                let (y, x) = ((i / side) as f32, (i % side) as f32);
                0.5 + 0.2 * ((x * 0.15).sin() + (y * 0.1).cos()) / 2.0
            })
            .collect();
        let img = Image::from_plane(side, side, &plane, 1);
        assert_eq!(rotate(&img, 0.0), img);
        for angle in [17.0, -95.0, 170.0] {
            let back = rotate(&rotate(&img, angle), -angle);
            let c = (side as f64 - 1.0) / 2.0;
            for y in 0..side {
                for x in 0..side {
                    let r = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
                    if r < c - 2.0 {
                        let d = (back.at(0, y, x) - img.at(0, y, x)).abs();
                        assert!(d <= 2.0 / 255.0, "angle {angle} ({y},{x}) diff {d}");
                    }
                }
            }
        }
    }
}
