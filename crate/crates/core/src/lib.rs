//! Contrastive self-supervised embeddings for SAR wave-mode imagery.
//!
//! The crate covers the full desk-scale pipeline: scene preprocessing
//! ([`sar`]), the augmentation pool ([`augment`]), a small CPU convolutional
//! encoder ([`nn`]) trained with the NT-Xent objective ([`contrastive`]),
//! evaluation probes and metrics ([`eval`]) and the file formats that tie the
//! stages together ([`store`]).

pub mod augment;
pub mod config;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod nn;
pub mod image;
pub mod rng;
pub mod sar;
pub mod store;

pub use error::{Error, Result};
