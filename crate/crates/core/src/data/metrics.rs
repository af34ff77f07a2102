use crate::error::{shape_err, Error, Result};

use super::image::ImageRGB;

/// Reported PSNR when the shaved regions are identical.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

/// Real-valued luma plane.
#[derive(Debug, Clone, PartialEq)]
pub struct YPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl YPlane {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Removes `border` pixels from every side.
    pub fn shave(&self, border: usize) -> Result<YPlane> {
        let min = 2 * border + 1;
        if self.width < min || self.height < min {
            return Err(Error::Input(format!(
                "{}x{} plane too small to shave {border} pixels per side",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width - 2 * border, self.height - 2 * border);
        let mut data = Vec::with_capacity(w * h);
        for y in border..border + h {
            data.extend_from_slice(&self.data[y * self.width + border..y * self.width + border + w]);
        }
        Ok(YPlane { width: w, height: h, data })
    }
}

/// BT.601 studio-swing luma in [16, 235].
pub fn rgb_to_y(img: &ImageRGB) -> YPlane {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            16.0 + (65.481 * p[0] as f64 + 128.553 * p[1] as f64 + 24.966 * p[2] as f64) / 255.0
        })
        .collect();
    YPlane { width: img.width(), height: img.height(), data }
}

fn check_pair(a: &ImageRGB, b: &ImageRGB) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(shape_err!(
            "image dims differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    Ok(())
}

fn check_planes(a: &YPlane, b: &YPlane) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(shape_err!(
            "plane dims differ: {}x{} vs {}x{}",
            a.width,
            a.height,
            b.width,
            b.height
        ));
    }
    Ok(())
}

/// PSNR between two already-shaved planes, capped at [`PSNR_CAP_DB`].
pub fn psnr_planes(a: &YPlane, b: &YPlane) -> Result<f64> {
    check_planes(a, b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-region separable filtering.
fn filter_valid(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (width + 1 - n, height + 1 - n);
    let mut rows = vec![0.0; height * ow];
    for y in 0..height {
        let line = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (j, &kj) in k.iter().enumerate() {
            let src_row = &rows[(y + j) * ow..(y + j + 1) * ow];
            for (o, &v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src_row) {
                *o += kj * v;
            }
        }
    }
    out
}

/// Mean SSIM between two already-shaved planes.
pub fn ssim_planes(a: &YPlane, b: &YPlane) -> Result<f64> {
    check_planes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "{}x{} region smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.width, a.height
        )));
    }
    if a.data == b.data {
        return Ok(1.0);
    }
    let k = gaussian_window();
    let (w, h) = (a.width, a.height);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> {
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(&a.data, w, h, &k);
    let mu_b = filter_valid(&b.data, w, h, &k);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &k);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Luma PSNR with a `scale`-pixel border removed.
pub fn psnr_y(sr: &ImageRGB, hr: &ImageRGB, scale: usize) -> Result<f64> {
    check_pair(sr, hr)?;
    psnr_planes(&rgb_to_y(sr).shave(scale)?, &rgb_to_y(hr).shave(scale)?)
}

/// Luma SSIM with a `scale`-pixel border removed.
pub fn ssim_y(sr: &ImageRGB, hr: &ImageRGB, scale: usize) -> Result<f64> {
    check_pair(sr, hr)?;
    ssim_planes(&rgb_to_y(sr).shave(scale)?, &rgb_to_y(hr).shave(scale)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(v: u8) -> ImageRGB {
        ImageRGB::from_fn(2, 2, |_, _| [v; 3])
    }

    #[test]
    fn luma_endpoints() {
        assert!((rgb_to_y(&solid(0)).data[0] - 16.0).abs() < 1e-12);
        assert!((rgb_to_y(&solid(255)).data[0] - 235.0).abs() < 1e-9);
        // 16 + 219 * 128 / 255
        assert!((rgb_to_y(&solid(128)).data[0] - 125.9294).abs() < 1e-3);
    }

    #[test]
    fn window_sums_to_one() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], w[10]);
    }

    #[test]
    fn errors() {
        let a = ImageRGB::from_fn(20, 20, |_, _| [0; 3]);
        let b = ImageRGB::from_fn(20, 21, |_, _| [0; 3]);
        assert!(matches!(psnr_y(&a, &b, 2), Err(Error::Shape(_))));
        let tiny = ImageRGB::from_fn(4, 4, |_, _| [0; 3]);
        assert!(matches!(psnr_y(&tiny, &tiny, 2), Err(Error::Input(_))));
        assert!(matches!(ssim_y(&a, &a, 5), Err(Error::Input(_))));
    }
}
