//! Gap filling for multi-band rasters by fitting an untrained convolutional
//! hourglass network to the observed pixels of a single corrupted image.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod io;
pub mod mask;
pub mod net;
pub mod raster;
pub mod restore;
pub mod seed;
pub mod selftest;
pub mod synth;

pub use error::{Error, Result};
