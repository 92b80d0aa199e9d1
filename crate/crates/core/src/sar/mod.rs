//! SAR wave-mode scene preprocessing.

pub mod cmod5n;
pub mod pipeline;
pub mod scene;

pub use cmod5n::cmod5n;
pub use pipeline::{
    boxcar_downscale, incidence_normalize, intensity_normalize, orient_north_up, preprocess_batch,
    preprocess_scene, PreprocessConfig,
};
pub use scene::{Grid, PassDirection, Polarization, ProcessedImage, SceneGrid, SsrGrid};
