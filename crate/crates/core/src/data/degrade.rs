use crate::error::Result;
use crate::ops::{downscale, resize, ResizeKind};

use super::image::ImageRGB;

/// Antialiased bicubic downscale, rounded to 8 bits. The input is first
/// cropped to the largest region divisible by `scale`.
pub fn degrade(hr: &ImageRGB, scale: usize) -> Result<ImageRGB> {
    let hr = hr.crop_to_multiple(scale);
    if scale == 1 {
        return Ok(hr);
    }
    Ok(ImageRGB::from_levels(&downscale(&hr.to_levels(), scale)?))
}

/// Bicubic upscale with the same kernel the network uses for its skip path.
pub fn upscale_bicubic(lr: &ImageRGB, scale: usize) -> Result<ImageRGB> {
    Ok(ImageRGB::from_levels(&resize(ResizeKind::Bicubic, &lr.to_levels(), scale)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_identity() {
        let c = ImageRGB::from_fn(12, 9, |_, _| [77, 0, 255]);
        let d = degrade(&c, 3).unwrap();
        assert_eq!((d.width(), d.height()), (4, 3));
        assert!(d.data().chunks(3).all(|p| p == [77, 0, 255]));

        let img = ImageRGB::from_fn(5, 7, |x, y| [(x * 40) as u8, (y * 30) as u8, 9]);
        assert_eq!(degrade(&img, 1).unwrap(), img);
    }

    #[test]
    fn crops_indivisible_input() {
        let img = ImageRGB::from_fn(11, 10, |_, _| [1, 2, 3]);
        let d = degrade(&img, 4).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
    }
}
