//! Manifests, embedding files and the synthetic corpus.

pub mod embeddings;
pub mod manifest;
pub mod synth;

pub use embeddings::{EmbeddingMatrix, EmbeddingSpace};
pub use manifest::{LabelMap, Manifest, ManifestRecord, Split, TargetSpec};
pub use synth::{synth_dataset, synth_images, SynthImage, SynthSpec, TextureClass};
