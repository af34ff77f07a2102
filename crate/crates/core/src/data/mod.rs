//! Image I/O, degradation, luma metrics and training patches.

mod degrade;
mod image;
mod metrics;
mod patches;
mod texture;

pub use degrade::{degrade, upscale_bicubic};
pub use image::{load_png, quantize, save_png, ImageRGB};
pub use metrics::{
    gaussian_window, psnr_planes, psnr_y, rgb_to_y, ssim_planes, ssim_y, YPlane, PSNR_CAP_DB,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use patches::{augment, load_dir, Dihedral, PatchBatch, TrainingSet};
pub use texture::procedural_texture;
