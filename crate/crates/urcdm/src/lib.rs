//! Desk-scale ultra-resolution cascaded diffusion: storage, training,
//! threaded sampling, metrics reports, the study service and the CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod evalsvc;
pub mod model_io;
pub mod report;
pub mod runner;
pub mod sample;
pub mod store;
pub mod train;

pub use error::{AppError, AppResult};
