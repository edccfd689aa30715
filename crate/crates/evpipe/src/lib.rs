//! File formats, dataset handling, training and benchmarking drivers, and
//! the `evpipe` command line built on `evpipe-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod events_io;
pub mod frames_io;
pub mod recon;
pub mod training;
pub mod weights_file;

pub use error::{Error, Result};
