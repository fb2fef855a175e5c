//! Diagnostics: covered-area curves, Grad-CAM heatmaps, feature-map grids
//! and descriptor similarity. Nothing here modifies a model.

pub mod area;
pub mod features;
pub mod gradcam;
pub mod image;

pub use area::{area_ratio_csv, area_ratio_curve, network_area_ratio_curve, AreaRatioRow};
pub use features::{
    descriptor_similarity, dump_feature_maps, mean_pairwise_cosine, FeatureBranch, FeatureGrid,
};
pub use gradcam::{default_layer, gradcam, gradcam_from, Heatmap};

use crate::error::{Error, Result};
use crate::harness::data::{CHANNELS, IMAGE_SIDE, PIXELS};
use crate::harness::Model;
use crate::tensor::Tensor;

/// Raw `[3, 32, 32]` images in `[0, 1]`, normalized as during training,
/// stacked into `[N, 3, 32, 32]`.
pub fn prepare_batch(model: &Model, images: &[f32]) -> Result<Tensor<f32>> {
    if images.is_empty() || !images.len().is_multiple_of(PIXELS) {
        return Err(Error::config(format!(
            "expected whole {CHANNELS}x{IMAGE_SIDE}x{IMAGE_SIDE} images, got {} values",
            images.len()
        )));
    }
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut data = images.to_vec();
    for img in data.chunks_exact_mut(PIXELS) {
        for c in 0..CHANNELS {
            for v in &mut img[c * plane..(c + 1) * plane] {
                *v = (*v - model.norm.mean[c]) / model.norm.std[c];
            }
        }
    }
    let n = images.len() / PIXELS;
    Ok(Tensor::from_vec(&[n, CHANNELS, IMAGE_SIDE, IMAGE_SIDE], data)?)
}

fn prepare(model: &Model, image: &[f32]) -> Result<Tensor<f32>> {
    if image.len() != PIXELS {
        return Err(Error::config(format!(
            "expected one {CHANNELS}x{IMAGE_SIDE}x{IMAGE_SIDE} image, got {} values",
            image.len()
        )));
    }
    prepare_batch(model, image)
}
