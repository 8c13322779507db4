//! Electromagnetic wormhole: ray tracing on the wormhole manifold, the deformation map onto the
//! physical device region and the pushforward material tensors.

// `!(x > 0.0)` is used throughout to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod deform;
pub mod error;
pub mod handle;
pub mod material;
pub mod point;
pub mod render;
pub mod tensor;
pub mod tracer;

pub use config::{validate_config, WarpProfile, WormholeConfig};
pub use error::{Error, Result};
pub use point::{normalize_handle_point, ManifoldPoint, Mouth};
pub use tensor::SymTensor3;
