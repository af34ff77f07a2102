use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor4};

use super::degrade::degrade;
use super::image::{load_png, save_png, ImageRGB};

/// Paired training patches in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch<T: Scalar = f32> {
    /// (b, 3, p/scale, p/scale)
    pub lr: Tensor4<T>,
    /// (b, 3, p, p)
    pub hr: Tensor4<T>,
    pub scale: usize,
}

/// HR images with their degraded counterparts, ready for patch sampling.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub scale: usize,
    /// HR patch side.
    pub patch: usize,
    pairs: Vec<(String, ImageRGB, ImageRGB)>,
}

impl TrainingSet {
    /// Degrades each image; images smaller than `patch` are skipped.
    pub fn new(images: Vec<(String, ImageRGB)>, scale: usize, patch: usize) -> Result<Self> {
        Self::with_lr(images, scale, patch, |_, hr| degrade(hr, scale))
    }

    fn with_lr(
        images: Vec<(String, ImageRGB)>,
        scale: usize,
        patch: usize,
        mut lr_of: impl FnMut(&str, &ImageRGB) -> Result<ImageRGB>,
    ) -> Result<Self> {
        if scale == 0 || patch == 0 || !patch.is_multiple_of(scale) {
            return Err(Error::Config(format!("patch {patch} must be a positive multiple of scale {scale}")));
        }
        let mut pairs = Vec::new();
        for (name, img) in images {
            if img.width() < patch || img.height() < patch {
                warn!("skipping {name}: {}x{} is smaller than patch {patch}", img.width(), img.height());
                continue;
            }
            let hr = img.crop_to_multiple(scale);
            let lr = lr_of(&name, &hr)?;
            if (lr.width() * scale, lr.height() * scale) != (hr.width(), hr.height()) {
                return Err(shape_err!(
                    "{name}: low-resolution image {}x{} does not match {}x{} at scale {scale}",
                    lr.width(),
                    lr.height(),
                    hr.width(),
                    hr.height()
                ));
            }
            pairs.push((name, hr, lr));
        }
        if pairs.is_empty() {
            return Err(Error::Input(format!("no image is at least {patch}x{patch}")));
        }
        Ok(TrainingSet { scale, patch, pairs })
    }

    /// Loads every PNG in `dir`. With `cache_lr`, degraded images are read
    /// from or written to `dir/LRx{scale}/` under the same file names.
    pub fn from_dir(dir: impl AsRef<Path>, scale: usize, patch: usize, cache_lr: bool) -> Result<Self> {
        let dir = dir.as_ref();
        let images = load_dir(dir)?;
        let cache = dir.join(format!("LRx{scale}"));
        Self::with_lr(images, scale, patch, |name, hr| {
            if !cache_lr {
                return degrade(hr, scale);
            }
            let path = cache.join(name);
            if path.exists() {
                return load_png(&path);
            }
            let lr = degrade(hr, scale)?;
            std::fs::create_dir_all(&cache)
                .map_err(|e| Error::io(format!("cannot create {}", cache.display()), e))?;
            save_png(&lr, &path)?;
            Ok(lr)
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(n, _, _)| n.as_str())
    }

    /// Draws `batch` aligned patch pairs uniformly over images and offsets.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> PatchBatch<T> {
        let (p, s) = (self.patch, self.scale);
        let q = p / s;
        let mut lr = Tensor4::zeros([batch, 3, q, q]);
        let mut hr = Tensor4::zeros([batch, 3, p, p]);
        let inv = 1.0 / 255.0;
        for b in 0..batch {
            let (_, hi, lo) = &self.pairs[rng.gen_range(0..self.pairs.len())];
            let ox = rng.gen_range(0..=lo.width() - q);
            let oy = rng.gen_range(0..=lo.height() - q);
            for y in 0..q {
                for x in 0..q {
                    let px = lo.pixel(ox + x, oy + y);
                    for (c, v) in px.into_iter().enumerate() {
                        lr.set([b, c, y, x], T::of(v as f64 * inv));
                    }
                }
            }
            for y in 0..p {
                for x in 0..p {
                    let px = hi.pixel(ox * s + x, oy * s + y);
                    for (c, v) in px.into_iter().enumerate() {
                        hr.set([b, c, y, x], T::of(v as f64 * inv));
                    }
                }
            }
        }
        PatchBatch { lr, hr, scale: s }
    }
}

/// Every `.png` in `dir` (not recursive), sorted by file name.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, ImageRGB)>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("cannot read directory {}", dir.display()), e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(format!("cannot list {}", dir.display()), e))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no PNG images in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().expect("file path").to_string_lossy().into_owned();
            Ok((name, load_png(&p)?))
        })
        .collect()
}

/// Square-plane transform: optional 90° rotation, then flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dihedral {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: bool,
}

impl Dihedral {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Dihedral { hflip: rng.gen_bool(0.5), vflip: rng.gen_bool(0.5), rot90: rng.gen_bool(0.5) }
    }

    /// Source coordinate of output pixel `(y, x)` in a `side`×`side` plane.
    fn source(self, y: usize, x: usize, side: usize) -> (usize, usize) {
        let (mut y, mut x) = (y, x);
        if self.vflip {
            y = side - 1 - y;
        }
        if self.hflip {
            x = side - 1 - x;
        }
        if self.rot90 {
            (x, side - 1 - y)
        } else {
            (y, x)
        }
    }

    /// Applies the transform to every plane of sample `n`.
    pub fn apply<T: Scalar>(self, t: &mut Tensor4<T>, n: usize) {
        let [_, c, h, _] = t.dims();
        let original: Vec<T> = t.sample(n).to_vec();
        for ch in 0..c {
            let plane = &original[ch * h * h..(ch + 1) * h * h];
            for y in 0..h {
                for x in 0..h {
                    let (sy, sx) = self.source(y, x, h);
                    t.set([n, ch, y, x], plane[sy * h + sx]);
                }
            }
        }
    }
}

/// Applies an independent random flip/rotation to each LR/HR pair.
pub fn augment<T: Scalar, R: Rng + ?Sized>(batch: &mut PatchBatch<T>, rng: &mut R) -> Result<()> {
    for t in [&batch.lr, &batch.hr] {
        if t.height() != t.width() {
            return Err(Error::Input(format!(
                "rotation needs square patches, got {}x{}",
                t.height(),
                t.width()
            )));
        }
    }
    for n in 0..batch.lr.batch() {
        let d = Dihedral::random(rng);
        d.apply(&mut batch.lr, n);
        d.apply(&mut batch.hr, n);
    }
    Ok(())
}
