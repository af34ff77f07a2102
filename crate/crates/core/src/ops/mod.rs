//! Forward and adjoint kernels on plain tensors.
//!
//! These are pure functions; recording for differentiation happens in
//! [`crate::autograd`].

pub mod conv;
pub mod pointwise;
pub mod resize;

pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvSpec};
pub use pointwise::{
    add, axpy, channel_scale, concat_channels, gelu, global_avg_pool, l1_loss, mul, sigmoid,
    slice_channels,
};
pub use resize::{downscale, resize, resize_backward, ResizeKind};
