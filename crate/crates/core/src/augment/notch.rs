//! Random notch filtering of dominant Fourier features.
//!
//! A Fourier feature is a conjugate-symmetric pair of 2-D DFT coefficients
//! `{(u, v), (-u, -v)}` (self-conjugate bins form singleton features). Features
//! are ranked by coefficient magnitude on the luminance plane; the most
//! dominant one is never touched and up to `max_zeroed` of the next
//! `candidates` are zeroed in every channel.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotchParams {
    /// Size of the candidate set following the excluded top feature.
    pub candidates: usize,
    pub max_zeroed: usize,
}

impl Default for NotchParams {
    fn default() -> Self {
        Self {
            candidates: 30,
            max_zeroed: 15,
        }
    }
}

/// Record of one notch application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotchOutcome {
    /// 1-based ranks that were zeroed.
    pub ranks: Vec<usize>,
    /// Canonical (row, col) frequency of each zeroed feature.
    pub frequencies: Vec<(usize, usize)>,
    /// Largest |imag| of the inverse transform before it was discarded.
    pub imag_residue: f64,
}

/// In-place 2-D FFT over an n×n row-major buffer.
pub fn fft2(buf: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
    if inverse {
        let s = 1.0 / (n * n) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }
}

fn conjugate(n: usize, r: usize, c: usize) -> (usize, usize) {
    ((n - r) % n, (n - c) % n)
}

/// Features (canonical index, partner index) ordered by descending magnitude,
/// ties broken by canonical index.
pub fn rank_features(spectrum: &[Complex64], n: usize) -> Vec<((usize, usize), (usize, usize))> {
    let mut feats = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let (pr, pc) = conjugate(n, r, c);
            if (r, c) <= (pr, pc) {
                feats.push(((r, c), (pr, pc)));
            }
        }
    }
    feats.sort_by(|a, b| {
        let ma = spectrum[a.0 .0 * n + a.0 .1].norm();
        let mb = spectrum[b.0 .0 * n + b.0 .1].norm();
        mb.total_cmp(&ma).then(a.0.cmp(&b.0))
    });
    feats
}

/// Sample which ranks to zero: k ~ U{0..max_zeroed}, uniformly among ranks 2..=candidates+1.
pub fn sample_notch_ranks(rng: &mut Rng, params: &NotchParams, n_features: usize) -> Vec<usize> {
    let available = params.candidates.min(n_features.saturating_sub(1));
    let k = rng.int_inclusive(0, params.max_zeroed.min(available));
    let mut ranks: Vec<usize> = rng.sample_indices(available, k).into_iter().map(|i| i + 2).collect();
    ranks.sort_unstable();
    ranks
}

/// Zero the features at the given 1-based ranks (rank 1 is refused) and invert.
pub fn notch_filter_ranks(img: &Image, ranks: &[usize]) -> Result<(Image, NotchOutcome)> {
    if img.height != img.width {
        return Err(Error::Input(format!(
            "notch filter needs a square image, got {}x{}",
            img.height, img.width
        )));
    }
    if ranks.contains(&1) {
        return Err(Error::Input("the most dominant Fourier feature cannot be zeroed".into()));
    }
    let n = img.height;
    let mut lum: Vec<Complex64> = img.luminance().iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
    fft2(&mut lum, n, false);
    let ranked = rank_features(&lum, n);
    let mut zeroed = Vec::with_capacity(ranks.len());
    for &r in ranks {
        if r == 0 || r > ranked.len() {
            return Err(Error::Input(format!("notch rank {r} out of range")));
        }
        zeroed.push(ranked[r - 1]);
    }

    let mut out = Image::new(img.channels, n, n);
    let mut residue = 0.0f64;
    for c in 0..img.channels {
        let mut spec: Vec<Complex64> = img.plane(c).iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
        fft2(&mut spec, n, false);
        for &((r, cc), (pr, pc)) in &zeroed {
            spec[r * n + cc] = Complex64::new(0.0, 0.0);
            spec[pr * n + pc] = Complex64::new(0.0, 0.0);
        }
        fft2(&mut spec, n, true);
        for (o, v) in out.plane_mut(c).iter_mut().zip(&spec) {
            residue = residue.max(v.im.abs());
            *o = v.re.clamp(0.0, 1.0) as f32;
        }
    }
    Ok((
        out,
        NotchOutcome {
            ranks: ranks.to_vec(),
            frequencies: zeroed.iter().map(|f| f.0).collect(),
            imag_residue: residue,
        },
    ))
}

/// Random notch filter.
pub fn notch_filter(img: &Image, rng: &mut Rng, params: &NotchParams) -> Result<(Image, NotchOutcome)> {
    if img.height != img.width {
        return Err(Error::Input(format!(
            "notch filter needs a square image, got {}x{}",
            img.height, img.width
        )));
    }
    let n = img.height;
    // number of conjugate-pair features in an n×n spectrum
    let self_conj = if n % 2 == 0 { 4 } else { 1 };
    let n_features = (n * n - self_conj) / 2 + self_conj;
    let ranks = sample_notch_ranks(rng, params, n_features);
    notch_filter_ranks(img, &ranks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(seed: u64, n: usize) -> Image {
        let mut rng = Rng::new(seed);
        let plane: Vec<f32> = (0..n * n).map(|_| rng.uniform() as f32).collect();
        Image::from_plane(n, n, &plane, 3)
    }

    #[test]
    fn no_ranks_round_trips() {
        let img = random_image(1, 32);
        let (out, o) = notch_filter_ranks(&img, &[]).unwrap();
        let max = img.data.iter().zip(&out.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(max < 1e-6);
        assert!(o.imag_residue < 1e-9);
    }

    #[test]
    fn removing_single_sinusoid_leaves_mean() {
        let n = 32;
        let plane: Vec<f32> = (0..n * n)
            .map(|i| {
                let x = (i % n) as f64;
                (0.5 + 0.25 * (2.0 * std::f64::consts::PI * 3.0 * x / n as f64).cos()) as f32
            })
            .collect();
        let img = Image::from_plane(n, n, &plane, 3);
        let (out, o) = notch_filter_ranks(&img, &[2]).unwrap();
        assert_eq!(o.frequencies, vec![(0, 3)]);
        assert!(out.data.iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn dominant_feature_protected() {
        let img = random_image(2, 8);
        assert!(notch_filter_ranks(&img, &[1]).is_err());
        let rect = Image::new(3, 8, 9);
        assert!(notch_filter_ranks(&rect, &[]).is_err());
    }

    #[test]
    fn sampled_ranks_within_window() {
        let mut rng = Rng::new(3);
        let p = NotchParams::default();
        let mut saw_max = false;
        for _ in 0..2000 {
            let r = sample_notch_ranks(&mut rng, &p, 500);
            assert!(r.len() <= 15);
            assert!(r.iter().all(|&x| (2..=31).contains(&x)));
            saw_max |= r.len() == 15;
        }
        assert!(saw_max);
    }

    #[test]
    fn output_real_and_in_range() {
        let mut rng = Rng::new(4);
        for seed in 0..5 {
            let img = random_image(seed, 16);
            let (out, o) = notch_filter(&img, &mut rng, &NotchParams::default()).unwrap();
            assert!(o.imag_residue < 1e-9);
            assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(out.plane(0), out.plane(1));
        }
    }
}
