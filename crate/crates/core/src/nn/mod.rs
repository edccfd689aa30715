//! Tensor math, layers with analytic gradients, the recurrent UNet and its
//! training loop.

pub mod adam;
pub mod conv;
pub mod loss;
pub mod norm;
pub mod residual;
pub mod tensor;
pub mod train;
pub mod unet;
pub mod weights;

pub use tensor::{Real, Shape4, Tensor4};
pub use weights::{NetConfig, NetworkWeights};
