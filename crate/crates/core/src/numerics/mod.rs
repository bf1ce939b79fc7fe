//! Dense tensors, differentiable layers with hand-written backward passes,
//! the optimizer and the finite-difference gradient verifier.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod math;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::finite_diff_check;
pub use params::ParamStore;
pub use tensor::{conv2d, conv2d_backward, Tensor};
