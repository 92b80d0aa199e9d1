use rustfft::num_complex::Complex64;
use tempfile::tempdir;
use wvssl::augment::notch::fft2;
use wvssl::store::{synth_dataset, synth_images, Manifest, SynthSpec};

/// Wavelength of the strongest non-DC Fourier component.
fn fft_peak_wavelength(pixels: &[u8], side: usize) -> f64 {
    let mean = pixels.iter().map(|&v| v as f64).sum::<f64>() / pixels.len() as f64;
    let mut buf: Vec<Complex64> = pixels.iter().map(|&v| Complex64::new(v as f64 - mean, 0.0)).collect();
    fft2(&mut buf, side, false);
    let mut best = (0.0, 0.0);
    for r in 0..side {
        for c in 0..side {
            if r == 0 && c == 0 {
                continue;
            }
            let mag = buf[r * side + c].norm();
            if mag > best.0 {
                let fr = if r > side / 2 { r as f64 - side as f64 } else { r as f64 };
                let fc = if c > side / 2 { c as f64 - side as f64 } else { c as f64 };
                best = (mag, side as f64 / (fr * fr + fc * fc).sqrt());
            }
        }
    }
    best.1
}

#[test]
fn wavelength_target_recoverable_from_spectrum_peak() {
    let imgs = synth_images(&SynthSpec {
        count: 2000,
        ..Default::default()
    })
    .unwrap();
    let mut worst = 0.0f64;
    for im in &imgs {
        let est = fft_peak_wavelength(&im.pixels.pixels, 64);
        worst = worst.max((est - im.wavelength).abs() / im.wavelength);
    }
    assert!(worst < 0.05, "worst relative wavelength error {worst}");
}

#[test]
fn dataset_on_disk_matches_memory() {
    let dir = tempdir().unwrap();
    let spec = SynthSpec {
        count: 12,
        ..Default::default()
    };
    let m = synth_dataset(&spec, dir.path()).unwrap();
    let loaded = Manifest::load(&dir.path().join("manifest.tsv")).unwrap();
    assert_eq!(loaded.records, m.records);
    assert_eq!(loaded.classes, ["flat", "streak", "cells", "slick"]);
    assert!(loaded.missing_files().is_empty());
    let mem = synth_images(&spec).unwrap();
    let png = wvssl::image::GrayImage8::load_png(&loaded.resolve(&loaded.records[3])).unwrap();
    assert_eq!(png, mem[3].pixels);
}
