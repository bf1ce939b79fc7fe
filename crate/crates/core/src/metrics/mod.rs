//! FID, patch-FID and the k-NN manifold precision/recall metrics.

mod features;
pub mod linalg;
mod manifold;
mod moments;
mod pfid;

pub use features::{default_feature_extractor, FeatureExtractor, HandcraftedExtractor};
pub use manifold::{improved_precision, improved_recall, knn_radii};
pub use moments::{frechet_distance, FeatureMoments, MomentAccumulator};
pub use pfid::{crop_features, draw_crop_specs, pfid, CropSpec, PatchSource, PfidResult, ALLOWED_SCALES};

use alloc::vec::Vec;

use crate::{Result, Tensor};

/// Features of whole images (resized to the extractor input).
pub fn image_features(images: &[Tensor], extractor: &dyn FeatureExtractor) -> Result<Vec<Vec<f64>>> {
    images.iter().map(|i| extractor.extract(i)).collect()
}

/// FID between two image sets.
pub fn fid(real: &[Tensor], generated: &[Tensor], extractor: &dyn FeatureExtractor) -> Result<f64> {
    let a = FeatureMoments::from_features(&image_features(real, extractor)?)?;
    let b = FeatureMoments::from_features(&image_features(generated, extractor)?)?;
    frechet_distance(&a, &b)
}
