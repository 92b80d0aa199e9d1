//! Cutout and mixup.

use serde::{Deserialize, Serialize};

use crate::augment::geometric::CropRect;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoutParams {
    pub max_rects: usize,
    pub rect_probability: f64,
    pub area_min: f64,
    pub area_max: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl Default for CutoutParams {
    fn default() -> Self {
        Self {
            max_rects: 3,
            rect_probability: 0.5,
            area_min: 0.02,
            area_max: 0.30,
            aspect_min: 0.3,
            aspect_max: 3.33,
        }
    }
}

/// Draw up to `max_rects` rectangles, each kept with `rect_probability`.
///
/// Each rectangle's realized area fraction and aspect (h/w) lie inside the
/// configured bounds; draws that cannot satisfy them after ten attempts are dropped.
pub fn sample_cutout(rng: &mut Rng, height: usize, width: usize, p: &CutoutParams) -> Vec<CropRect> {
    let area = (height * width) as f64;
    let mut rects = Vec::new();
    for _ in 0..p.max_rects {
        if !rng.bernoulli(p.rect_probability) {
            continue;
        }
        for _ in 0..10 {
            let target = area * rng.uniform_range(p.area_min, p.area_max);
            let ratio = rng.uniform_range(p.aspect_min.ln(), p.aspect_max.ln()).exp();
            let h = (target * ratio).sqrt().round() as usize;
            let w = (target / ratio).sqrt().round() as usize;
            if h == 0 || w == 0 || h > height || w > width {
                continue;
            }
            let frac = (h * w) as f64 / area;
            let aspect = h as f64 / w as f64;
            if frac < p.area_min || frac > p.area_max || aspect < p.aspect_min || aspect > p.aspect_max {
                continue;
            }
            rects.push(CropRect {
                top: rng.int_inclusive(0, height - h),
                left: rng.int_inclusive(0, width - w),
                height: h,
                width: w,
            });
            break;
        }
    }
    rects
}

/// Zero the given rectangles in every channel.
pub fn cutout(img: &Image, rects: &[CropRect]) -> Image {
    let mut out = img.clone();
    let w = img.width;
    for c in 0..out.channels {
        let plane = out.plane_mut(c);
        for r in rects {
            for y in r.top..r.top + r.height {
                plane[y * w + r.left..y * w + r.left + r.width].fill(0.0);
            }
        }
    }
    out
}

/// `(1 - m)·a + m·b`.
pub fn mixup(a: &Image, b: &Image, m: f32) -> Result<Image> {
    if !a.same_shape(b) {
        return Err(Error::Input(format!(
            "mixup shape mismatch: {}x{}x{} vs {}x{}x{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x + m * (y - x)).clamp(x.min(y), x.max(y)))
        .collect();
    Image::from_data(a.channels, a.height, a.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_rects_is_identity() {
        let img = Image::filled(3, 8, 8, 0.5);
        assert_eq!(cutout(&img, &[]), img);
        let mut rng = Rng::new(1);
        let p = CutoutParams {
            rect_probability: 0.0,
            ..Default::default()
        };
        assert!(sample_cutout(&mut rng, 8, 8, &p).is_empty());
    }

    #[test]
    fn rect_bounds_hold() {
        let mut rng = Rng::new(2);
        let p = CutoutParams::default();
        for _ in 0..3000 {
            let rects = sample_cutout(&mut rng, 64, 64, &p);
            assert!(rects.len() <= 3);
            for r in &rects {
                let frac = (r.height * r.width) as f64 / 4096.0;
                assert!((0.02..=0.30).contains(&frac));
                let aspect = r.height as f64 / r.width as f64;
                assert!((0.3..=3.33).contains(&aspect));
                assert!(r.top + r.height <= 64 && r.left + r.width <= 64);
            }
            let out = cutout(&Image::filled(1, 64, 64, 1.0), &rects);
            let zeroed = out.data.iter().filter(|&&v| v == 0.0).count() as f64 / 4096.0;
            assert!(zeroed <= 0.90);
        }
    }

    #[test]
    fn mixup_cases() {
        let a = Image::filled(3, 4, 4, 0.0);
        let b = Image::filled(3, 4, 4, 1.0);
        assert_eq!(mixup(&a, &b, 0.0).unwrap(), a);
        assert!(mixup(&a, &b, 0.25).unwrap().data.iter().all(|&v| (v - 0.25).abs() < 1e-7));
        assert_eq!(mixup(&b, &b, 0.3).unwrap(), b);
        let c = Image::filled(1, 4, 4, 0.0);
        assert!(mixup(&a, &c, 0.1).is_err());
    }
}
