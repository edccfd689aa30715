//! Event-camera video reconstruction without the standard library.
//!
//! The crate covers the event data model and fixed-count windowing, a
//! synthetic event simulator, voxel-grid tensors, baseline and learned
//! reconstructors, a small convolutional network stack with analytic
//! gradients, and the evaluation metrics.

#![no_std]

extern crate alloc;

pub mod error;
pub mod event;
pub mod frame;
pub mod metrics;
pub mod nn;
pub mod reconstruct;
pub mod simulator;
pub mod ssim;
pub mod tensorizer;

pub use error::{Error, Result};
pub use event::{Event, EventStream, EventWindow, Polarity, SensorGeometry};
pub use frame::Frame;
pub use tensorizer::{voxelize, EventTensor};
