//! Ultra-resolution cascaded diffusion, algorithmic core.
//!
//! Everything in this crate is pure computation over in-memory values: dense
//! tensors with hand-written backward passes, a variance-preserving diffusion
//! process, a small convolutional denoiser, cascade composition, overlapping
//! tile planning with inpainting constraints, a procedural image corpus, the
//! evaluation metrics and the perception-study bookkeeping. File formats,
//! threads, HTTP and the command line live in the `urcdm` crate.
#![no_std]

extern crate alloc;

pub mod cascade;
pub mod diffusion;
mod error;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod scorenet;
pub mod study;
pub mod synthdata;
pub mod tiler;

pub use error::{Error, Result};
pub use numerics::tensor::Tensor;
