use std::path::Path;

use image::{ColorType, ImageReader, RgbImage};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// 8-bit interleaved RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(shape_err!(
                "{width}x{height} RGB image needs {} samples, got {}",
                3 * width * height,
                data.len()
            ));
        }
        Ok(ImageRGB { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageRGB { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Top-left crop.
    pub fn crop(&self, width: usize, height: usize) -> Result<Self> {
        self.crop_at(0, 0, width, height)
    }

    pub fn crop_at(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(shape_err!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{} image",
                self.width,
                self.height
            ));
        }
        Ok(ImageRGB::from_fn(width, height, |x, y| self.pixel(x0 + x, y0 + y)))
    }

    /// Largest top-left region whose sides are multiples of `scale`.
    pub fn crop_to_multiple(&self, scale: usize) -> Self {
        let (w, h) = (self.width - self.width % scale, self.height - self.height % scale);
        if (w, h) == (self.width, self.height) {
            return self.clone();
        }
        self.crop(w, h).expect("crop within bounds")
    }

    /// Planar (1, 3, h, w) tensor scaled to [0, 1].
    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        let inv = 1.0 / 255.0;
        Tensor4::from_fn([1, 3, self.height, self.width], |[_, c, y, x]| {
            T::of(self.data[3 * (y * self.width + x) + c] as f64 * inv)
        })
    }

    /// Clamps sample `n` of a [0, 1] tensor and quantizes to 8 bits.
    pub fn from_tensor<T: Scalar>(t: &Tensor4<T>, n: usize) -> Result<Self> {
        let [b, c, h, w] = t.dims();
        if c != 3 || n >= b {
            return Err(shape_err!("cannot take RGB sample {n} from tensor of dims {:?}", t.dims()));
        }
        Ok(ImageRGB::from_fn(w, h, |x, y| {
            let q = |c| quantize(t.at([n, c, y, x]).as_f64() * 255.0);
            [q(0), q(1), q(2)]
        }))
    }

    /// Planar (1, 3, h, w) tensor of raw 0..=255 values.
    pub(crate) fn to_levels(&self) -> Tensor4<f64> {
        Tensor4::from_fn([1, 3, self.height, self.width], |[_, c, y, x]| {
            self.data[3 * (y * self.width + x) + c] as f64
        })
    }

    pub(crate) fn from_levels(t: &Tensor4<f64>) -> Self {
        let [_, _, h, w] = t.dims();
        ImageRGB::from_fn(w, h, |x, y| {
            [quantize(t.at([0, 0, y, x])), quantize(t.at([0, 1, y, x])), quantize(t.at([0, 2, y, x]))]
        })
    }
}

/// Rounds to the nearest 8-bit level, saturating at both ends.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

/// Reads an 8-bit PNG. Gray and alpha channels are expanded or dropped;
/// 16-bit and float images are rejected.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let path = path.as_ref();
    let decode = |msg: String| Error::Decode { path: path.to_path_buf(), msg };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(format!("cannot open {}", path.display()), e))?
        .with_guessed_format()
        .map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    let img = reader.decode().map_err(|e| decode(e.to_string()))?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => {}
        other => return Err(decode(format!("unsupported pixel format {other:?}; expected 8-bit"))),
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageRGB::new(w as usize, h as usize, rgb.into_raw())
}

pub fn save_png(image: &ImageRGB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, image.data.clone())
        .expect("sample count checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(format!("cannot write {}", path.display()), io),
        other => Error::Decode { path: path.to_path_buf(), msg: other.to_string() },
    })
}
