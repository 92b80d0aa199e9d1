//! Dataset loading and frozen-encoder embedding extraction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{model_input, GrayImage8, Image};
use crate::nn::{Encoder, ParamSet};
use crate::store::{EmbeddingMatrix, EmbeddingSpace, Manifest, ManifestRecord};

/// Load model inputs for `records`, failing with a report of every unreadable file.
pub fn load_images(manifest: &Manifest, records: &[&ManifestRecord], side: usize) -> Result<Vec<Image>> {
    let loaded: Vec<std::result::Result<Image, String>> = records
        .par_iter()
        .map(|r| {
            let path = manifest.resolve(r);
            GrayImage8::load_png(&path)
                .map(|g| model_input(&g, side))
                .map_err(|e| format!("{} ({}): {e}", r.id, path.display()))
        })
        .collect();
    let failures: Vec<&String> = loaded.iter().filter_map(|r| r.as_ref().err()).collect();
    if !failures.is_empty() {
        let shown: Vec<&str> = failures.iter().take(10).map(|s| s.as_str()).collect();
        return Err(Error::Input(format!(
            "{} of {} images could not be loaded:\n  {}",
            failures.len(),
            records.len(),
            shown.join("\n  ")
        )));
    }
    Ok(loaded.into_iter().map(|r| r.unwrap()).collect())
}

/// Embed images with a frozen encoder. Rows follow input order; each row depends only on its image.
pub fn embed_images(
    encoder: &Encoder,
    params: &ParamSet<f32>,
    images: &[Image],
    ids: &[String],
    space: EmbeddingSpace,
) -> Result<EmbeddingMatrix> {
    encoder.check_params(params)?;
    if ids.len() != images.len() {
        return Err(Error::Input("image and id counts differ".into()));
    }
    let rows: Vec<Vec<f32>> = images
        .par_iter()
        .map(|im| {
            let (h, z) = encoder.forward(params, &im.data)?;
            Ok(match space {
                EmbeddingSpace::Backbone => h,
                EmbeddingSpace::Projected => z,
            })
        })
        .collect::<Result<_>>()?;
    let dim = match space {
        EmbeddingSpace::Backbone => encoder.representation_dim(),
        EmbeddingSpace::Projected => encoder.projection_dim(),
    };
    EmbeddingMatrix::new(dim, rows.concat(), ids.to_vec(), space)
}

/// Embed every record of a manifest in manifest order.
pub fn embed_dataset(
    encoder: &Encoder,
    params: &ParamSet<f32>,
    manifest: &Manifest,
    space: EmbeddingSpace,
) -> Result<EmbeddingMatrix> {
    let records: Vec<&ManifestRecord> = manifest.records.iter().collect();
    let images = load_images(manifest, &records, encoder.config.input_side)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    embed_images(encoder, params, &images, &ids, space)
}
