use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{Cell, Table};
use crate::data::{degrade, load_dir, psnr_y, ssim_y, ImageRGB};
use crate::error::{Error, Result};
use crate::model::MrenModel;
use crate::ops::{resize, ResizeKind};
use crate::tensor::Scalar;

/// Something that maps an LR image to an SR image.
#[derive(Debug, Clone, Copy)]
pub enum Upscaler<'a, T: Scalar = f32> {
    /// Parameter-free bicubic upsampling in precision `T`.
    Bicubic,
    Network(&'a MrenModel<T>),
}

impl<T: Scalar> Upscaler<'_, T> {
    pub fn upscale(&self, lr: &ImageRGB, scale: usize) -> Result<ImageRGB> {
        let x = lr.to_tensor::<T>();
        let y = match self {
            Upscaler::Bicubic => resize(ResizeKind::Bicubic, &x, scale)?,
            Upscaler::Network(m) => {
                if m.config.scale != scale {
                    return Err(Error::Config(format!(
                        "model is trained for x{}, evaluation asked for x{scale}",
                        m.config.scale
                    )));
                }
                m.infer(&x)?
            }
        };
        ImageRGB::from_tensor(&y, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scale: usize,
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["image", "psnr", "ssim"]);
        for r in &self.rows {
            t.push([Cell::Text(r.name.clone()), Cell::Psnr(r.psnr), Cell::Ssim(r.ssim)]);
        }
        t.push([Cell::Text("mean".into()), Cell::Psnr(self.mean_psnr), Cell::Ssim(self.mean_ssim)]);
        t
    }
}

/// Degrade, upscale and score each HR image on luma.
pub fn evaluate<T: Scalar>(
    upscaler: &Upscaler<'_, T>,
    images: &[(String, ImageRGB)],
    scale: usize,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::Input("no images to evaluate".into()));
    }
    let upscaler = *upscaler;
    let rows = images
        .par_iter()
        .map(|(name, img)| {
            let hr = img.crop_to_multiple(scale);
            let sr = upscaler.upscale(&degrade(&hr, scale)?, scale)?;
            Ok(EvalRow { name: name.clone(), psnr: psnr_y(&sr, &hr, scale)?, ssim: ssim_y(&sr, &hr, scale)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mean_psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / n;
    let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
    Ok(EvalReport { scale, rows, mean_psnr, mean_ssim })
}

pub fn evaluate_dir<T: Scalar>(
    upscaler: &Upscaler<'_, T>,
    hr_dir: impl AsRef<Path>,
    scale: usize,
) -> Result<EvalReport> {
    evaluate(upscaler, &load_dir(hr_dir)?, scale)
}
