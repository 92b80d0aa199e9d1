//! Scene → 8-bit image pipeline: orientation, incidence normalization,
//! boxcar downscaling and percentile intensity normalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage8;
use crate::sar::cmod5n::cmod5n;
use crate::sar::scene::{Grid, PassDirection, Polarization, ProcessedImage, SceneGrid, SsrGrid};

/// Reference wind speed and relative azimuth of the normalizing model evaluation.
pub const REFERENCE_WIND_MS: f64 = 10.0;
pub const REFERENCE_AZIMUTH_DEG: f64 = 45.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub boxcar_window: usize,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    /// Side of the final square image; `None` keeps the downscaled size.
    pub model_side: Option<usize>,
    /// Emit a uniform 128 image instead of failing on constant inputs.
    pub mid_gray_on_degenerate: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            boxcar_window: 10,
            lower_percentile: 1.0,
            upper_percentile: 99.0,
            model_side: Some(256),
            mid_gray_on_degenerate: false,
        }
    }
}

/// σ₀ divided by the model NRCS at 10 m/s, 45° relative azimuth (VV only).
pub fn incidence_normalize(scene: &SceneGrid) -> Result<SsrGrid> {
    if scene.polarization != Polarization::VV {
        return Err(Error::Domain("only VV polarization is supported".into()));
    }
    let reference = cmod5n(REFERENCE_WIND_MS, scene.incidence_deg, REFERENCE_AZIMUTH_DEG)?;
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::Computation(format!(
            "reference NRCS {reference} at incidence {}",
            scene.incidence_deg
        )));
    }
    let data = scene.sigma0.data.iter().map(|&s| s / reference).collect();
    Ok(SsrGrid {
        values: Grid {
            rows: scene.sigma0.rows,
            cols: scene.sigma0.cols,
            data,
        },
    })
}

/// Mean of each `window`×`window` block, sampled every `window` pixels.
/// Trailing rows/columns that do not fill a block are dropped.
pub fn boxcar_downscale(grid: &SsrGrid, window: usize) -> Result<SsrGrid> {
    if window == 0 {
        return Err(Error::Input("boxcar window must be positive".into()));
    }
    let g = &grid.values;
    if g.rows < window || g.cols < window {
        return Err(Error::Input(format!(
            "grid {}x{} smaller than boxcar window {window}",
            g.rows, g.cols
        )));
    }
    let out_rows = g.rows / window;
    let out_cols = g.cols / window;
    let area = (window * window) as f64;
    let mut data = vec![0.0; out_rows * out_cols];
    data.par_chunks_mut(out_cols).enumerate().for_each(|(orow, out)| {
        for (ocol, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in orow * window..(orow + 1) * window {
                let row = &g.data[r * g.cols + ocol * window..r * g.cols + (ocol + 1) * window];
                acc += row.iter().sum::<f64>();
            }
            *o = acc / area;
        }
    });
    Ok(SsrGrid {
        values: Grid {
            rows: out_rows,
            cols: out_cols,
            data,
        },
    })
}

/// Percentile with linear interpolation between order statistics of `sorted`.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Map a value into [0, 255] given the lower/upper percentile bounds, rounding half-up.
pub fn normalize_value(v: f64, p_lo: f64, p_hi: f64) -> u8 {
    let scaled = 255.0 * (v - p_lo) / (p_hi - p_lo);
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// 1st/99th-percentile stretch to 8 bits.
pub fn intensity_normalize(grid: &SsrGrid) -> Result<GrayImage8> {
    intensity_normalize_with(grid, 1.0, 99.0)
}

pub fn intensity_normalize_with(grid: &SsrGrid, lower: f64, upper: f64) -> Result<GrayImage8> {
    let g = &grid.values;
    if g.data.is_empty() {
        return Err(Error::Input("empty grid".into()));
    }
    let mut sorted = g.data.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let p_lo = percentile_sorted(&sorted, lower);
    let p_hi = percentile_sorted(&sorted, upper);
    if p_hi <= p_lo {
        return Err(Error::DegenerateImage(p_lo));
    }
    Ok(GrayImage8 {
        height: g.rows,
        width: g.cols,
        pixels: g.data.iter().map(|&v| normalize_value(v, p_lo, p_hi)).collect(),
    })
}

/// Rotate descending passes by 180° so north is up; ascending passes pass through.
pub fn orient_north_up(grid: &SsrGrid, pass: PassDirection) -> SsrGrid {
    match pass {
        PassDirection::Ascending => grid.clone(),
        PassDirection::Descending => {
            let mut data = grid.values.data.clone();
            data.reverse();
            SsrGrid {
                values: Grid {
                    rows: grid.values.rows,
                    cols: grid.values.cols,
                    data,
                },
            }
        }
    }
}

/// Full chain: orient, incidence-normalize, downscale, stretch, then crop to `model_side`.
pub fn preprocess_scene(scene: &SceneGrid, source_id: &str, cfg: &PreprocessConfig) -> Result<ProcessedImage> {
    scene.validate()?;
    let ssr = incidence_normalize(scene)?;
    let oriented = orient_north_up(&ssr, scene.pass_direction);
    let small = boxcar_downscale(&oriented, cfg.boxcar_window)?;
    let pixels = match intensity_normalize_with(&small, cfg.lower_percentile, cfg.upper_percentile) {
        Ok(p) => p,
        Err(Error::DegenerateImage(_)) if cfg.mid_gray_on_degenerate => GrayImage8 {
            height: small.values.rows,
            width: small.values.cols,
            pixels: vec![128; small.values.data.len()],
        },
        Err(e) => return Err(e),
    };
    let pixels = match cfg.model_side {
        Some(side) => pixels.center_square(side),
        None => pixels,
    };
    Ok(ProcessedImage {
        pixels,
        source_id: source_id.to_string(),
    })
}

/// Scene-parallel preprocessing; results keep input order.
pub fn preprocess_batch(scenes: &[(String, SceneGrid)], cfg: &PreprocessConfig) -> Vec<Result<ProcessedImage>> {
    scenes
        .par_iter()
        .map(|(id, s)| preprocess_scene(s, id, cfg))
        .collect()
}
