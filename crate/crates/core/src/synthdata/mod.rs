//! Procedural multi-magnification slides standing in for whole-slide images,
//! plus the crop, resize and training-set plumbing around them.

mod extract;
mod generate;
mod image;

pub use extract::{
    extract_training_set, CropRef, ExtractParams, Magnification, ModelSlot, TrainingExample, TrainingSet,
};
pub use generate::{background_fraction, gen_pyramid, GeneratorParams, Pyramid};
pub use image::{area_resample, crop_or_pad, dihedral, quantize, Image8};
