//! Multi-channel float images and 8-bit grayscale I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Planar (channel-major) f32 image with values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Input(format!(
                "image buffer has {} values, expected {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Replicate a single plane into `channels` identical channels.
    pub fn from_plane(height: usize, width: usize, plane: &[f32], channels: usize) -> Self {
        assert_eq!(plane.len(), height * width);
        let mut data = Vec::with_capacity(channels * plane.len());
        for _ in 0..channels {
            data.extend_from_slice(plane);
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data
            .iter()
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / self.data.len().max(1) as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Apply `f` to each channel plane independently.
    pub fn map_planes(&self, mut f: impl FnMut(&[f32]) -> Vec<f32>) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            let out = f(self.plane(c));
            debug_assert_eq!(out.len(), self.plane_len());
            data.extend(out);
        }
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Mean over channels.
    pub fn luminance(&self) -> Vec<f32> {
        let n = self.plane_len();
        let mut out = vec![0.0f32; n];
        for c in 0..self.channels {
            for (o, &v) in out.iter_mut().zip(self.plane(c)) {
                *o += v;
            }
        }
        let inv = 1.0 / self.channels as f32;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }
}

/// 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage8 {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage8 {
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        Ok(Self {
            height: h as usize,
            width: w as usize,
            pixels: gray.into_raw(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| Error::Input("pixel buffer does not match dimensions".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
    }

    /// Center crop (or zero-pad) to a `side`×`side` square.
    pub fn center_square(&self, side: usize) -> GrayImage8 {
        let mut out = vec![0u8; side * side];
        let off_y = self.height as isize / 2 - side as isize / 2;
        let off_x = self.width as isize / 2 - side as isize / 2;
        for y in 0..side {
            let sy = y as isize + off_y;
            if sy < 0 || sy >= self.height as isize {
                continue;
            }
            for x in 0..side {
                let sx = x as isize + off_x;
                if sx < 0 || sx >= self.width as isize {
                    continue;
                }
                out[y * side + x] = self.pixels[sy as usize * self.width + sx as usize];
            }
        }
        GrayImage8 {
            height: side,
            width: side,
            pixels: out,
        }
    }

    /// Scale to [0, 1] and replicate into `channels` identical planes.
    pub fn to_image(&self, channels: usize) -> Image {
        let plane: Vec<f32> = self.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Image::from_plane(self.height, self.width, &plane, channels)
    }
}

/// Model input from a stored image: largest center square, resampled to
/// `side` when needed, as 3 replicated channels.
pub fn model_input(img: &GrayImage8, side: usize) -> Image {
    let square = img.height.min(img.width).max(1);
    let img = img.center_square(square).to_image(3);
    if square == side {
        return img;
    }
    let rect = crate::augment::geometric::CropRect {
        top: 0,
        left: 0,
        height: square,
        width: square,
    };
    crate::augment::geometric::crop_resize(&img, rect, side, side)
}
