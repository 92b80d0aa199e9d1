//! Scene and grid types plus the raw scene file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage8;
use crate::sar::cmod5n::{INCIDENCE_MAX_DEG, INCIDENCE_MIN_DEG};

pub const SCENE_MAGIC: &[u8; 4] = b"WVSC";
pub const SCENE_VERSION: u16 = 1;
const SCENE_HEADER_LEN: usize = 20;

/// Row-major 2-D grid of f64 values. Rows run along azimuth, columns along range.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "grid buffer has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    VV,
    HH,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassDirection {
    Ascending,
    Descending,
}

/// Calibrated backscatter (linear NRCS) with acquisition metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGrid {
    pub sigma0: Grid,
    pub incidence_deg: f64,
    pub polarization: Polarization,
    pub pass_direction: PassDirection,
}

impl SceneGrid {
    pub fn new(
        sigma0: Grid,
        incidence_deg: f64,
        polarization: Polarization,
        pass_direction: PassDirection,
    ) -> Result<Self> {
        let scene = Self {
            sigma0,
            incidence_deg,
            polarization,
            pass_direction,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn azimuth_px(&self) -> usize {
        self.sigma0.rows
    }

    pub fn range_px(&self) -> usize {
        self.sigma0.cols
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.sigma0.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Input(format!("sigma0 must be finite and >= 0, found {v}")));
        }
        if !(INCIDENCE_MIN_DEG..=INCIDENCE_MAX_DEG).contains(&self.incidence_deg) {
            return Err(Error::Domain(format!(
                "incidence {} deg outside [{INCIDENCE_MIN_DEG}, {INCIDENCE_MAX_DEG}]",
                self.incidence_deg
            )));
        }
        Ok(())
    }

    /// Read a `WVSC` binary scene.
    pub fn read_wvsc(path: &Path) -> Result<Self> {
        let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut header = [0u8; SCENE_HEADER_LEN];
        f.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[0..4] != SCENE_MAGIC {
            return Err(Error::Format(format!("{}: bad scene magic", path.display())));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != SCENE_VERSION {
            return Err(Error::Format(format!("{}: unsupported scene version {version}", path.display())));
        }
        let rows = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
        let inc_milli = u32::from_le_bytes(header[14..18].try_into().unwrap());
        let pass_direction = match header[18] {
            0 => PassDirection::Ascending,
            1 => PassDirection::Descending,
            p => return Err(Error::Format(format!("{}: bad pass code {p}", path.display()))),
        };
        let polarization = match header[19] {
            0 => Polarization::VV,
            1 => Polarization::HH,
            p => return Err(Error::Format(format!("{}: bad polarization code {p}", path.display()))),
        };
        let mut payload = Vec::new();
        f.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
        if payload.len() != rows * cols * 4 {
            return Err(Error::Format(format!(
                "{}: payload has {} bytes, expected {}",
                path.display(),
                payload.len(),
                rows * cols * 4
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        SceneGrid::new(
            Grid::new(rows, cols, data)?,
            inc_milli as f64 / 1000.0,
            polarization,
            pass_direction,
        )
    }

    /// Write a `WVSC` binary scene (values stored as f32).
    pub fn write_wvsc(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut header = Vec::with_capacity(SCENE_HEADER_LEN);
        header.extend_from_slice(SCENE_MAGIC);
        header.extend_from_slice(&SCENE_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.sigma0.rows as u32).to_le_bytes());
        header.extend_from_slice(&(self.sigma0.cols as u32).to_le_bytes());
        header.extend_from_slice(&((self.incidence_deg * 1000.0).round() as u32).to_le_bytes());
        header.push(match self.pass_direction {
            PassDirection::Ascending => 0,
            PassDirection::Descending => 1,
        });
        header.push(match self.polarization {
            Polarization::VV => 0,
            Polarization::HH => 1,
        });
        f.write_all(&header).map_err(|e| Error::io(path, e))?;
        for &v in &self.sigma0.data {
            f.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a 16-bit grayscale PNG with a `<png>.json` sidecar ([`SceneSidecar`]).
    pub fn read_png16(path: &Path) -> Result<Self> {
        let sidecar_path = path.with_extension("png.json");
        let text = std::fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
        let meta: SceneSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", sidecar_path.display())))?;
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let luma = img.to_luma16();
        let (w, h) = luma.dimensions();
        let data = luma.into_raw().into_iter().map(|v| v as f64 * meta.sigma0_scale).collect();
        SceneGrid::new(
            Grid::new(h as usize, w as usize, data)?,
            meta.incidence_deg,
            meta.polarization,
            meta.pass_direction,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => Self::read_png16(path),
            _ => Self::read_wvsc(path),
        }
    }
}

/// Metadata stored next to a 16-bit PNG scene. Linear sigma0 = pixel value × `sigma0_scale`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub incidence_deg: f64,
    pub pass_direction: PassDirection,
    pub polarization: Polarization,
    pub sigma0_scale: f64,
}

/// Sea-surface-roughness ratios (dimensionless).
#[derive(Clone, Debug, PartialEq)]
pub struct SsrGrid {
    pub values: Grid,
}

/// Final 8-bit training image.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedImage {
    pub pixels: GrayImage8,
    pub source_id: String,
}
