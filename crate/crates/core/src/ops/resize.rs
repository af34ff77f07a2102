//! Integer-factor upsampling with half-pixel centers and clamp-to-edge taps.
//!
//! Both kernels are separable fixed linear maps, so the backward pass applies
//! the transposed tap tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Keys cubic convolution parameter.
pub const KEYS_A: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeKind {
    Bilinear,
    Bicubic,
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_cubic(t: f64) -> f64 {
    let a = KEYS_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-index list of `(source index, weight)` pairs along one axis.
#[derive(Debug, Clone)]
pub struct Taps {
    pub input_len: usize,
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl Taps {
    pub fn upsample(kind: ResizeKind, input_len: usize, scale: usize) -> Self {
        let last = input_len as isize - 1;
        let clamp = |i: isize| i.clamp(0, last) as usize;
        let taps = (0..input_len * scale)
            .map(|o| {
                let src = (o as f64 + 0.5) / scale as f64 - 0.5;
                let base = src.floor();
                let t = src - base;
                let base = base as isize;
                match kind {
                    ResizeKind::Bilinear => vec![(clamp(base), 1.0 - t), (clamp(base + 1), t)],
                    ResizeKind::Bicubic => vec![
                        (clamp(base - 1), keys_cubic(t + 1.0)),
                        (clamp(base), keys_cubic(t)),
                        (clamp(base + 1), keys_cubic(1.0 - t)),
                        (clamp(base + 2), keys_cubic(2.0 - t)),
                    ],
                }
            })
            .collect();
        Taps { input_len, taps }
    }

    /// Antialiased Keys downsampling: the kernel is stretched by `scale`,
    /// taps are clamped to the edge and each row of weights sums to one.
    pub fn downsample(input_len: usize, scale: usize) -> Self {
        let s = scale as f64;
        let last = input_len as isize - 1;
        let taps = (0..input_len / scale)
            .map(|o| {
                let center = (o as f64 + 0.5) * s - 0.5;
                let lo = (center - 2.0 * s).floor() as isize;
                let hi = (center + 2.0 * s).ceil() as isize;
                let mut taps: Vec<(usize, f64)> = Vec::new();
                for j in lo..=hi {
                    let w = keys_cubic((j as f64 - center) / s);
                    if w == 0.0 {
                        continue;
                    }
                    let idx = j.clamp(0, last) as usize;
                    match taps.iter_mut().find(|(i, _)| *i == idx) {
                        Some(t) => t.1 += w,
                        None => taps.push((idx, w)),
                    }
                }
                let total: f64 = taps.iter().map(|t| t.1).sum();
                taps.iter_mut().for_each(|t| t.1 /= total);
                taps
            })
            .collect();
        Taps { input_len, taps }
    }

    pub fn output_len(&self) -> usize {
        self.taps.len()
    }
}

fn apply_rows<T: Scalar>(src: &[T], rows: usize, taps: &Taps, dst: &mut Vec<T>) {
    let (w_in, w_out) = (taps.input_len, taps.output_len());
    let weights: Vec<Vec<(usize, T)>> =
        taps.taps.iter().map(|t| t.iter().map(|&(i, w)| (i, T::of(w))).collect()).collect();
    dst.clear();
    dst.reserve(rows * w_out);
    for r in 0..rows {
        let row = &src[r * w_in..(r + 1) * w_in];
        for tap in &weights {
            let mut acc = T::zero();
            for &(i, w) in tap {
                acc += w * row[i];
            }
            dst.push(acc);
        }
    }
}

fn apply_rows_transposed<T: Scalar>(src: &[T], rows: usize, taps: &Taps, dst: &mut Vec<T>) {
    let (w_in, w_out) = (taps.input_len, taps.output_len());
    dst.clear();
    dst.resize(rows * w_in, T::zero());
    for r in 0..rows {
        let row = &src[r * w_out..(r + 1) * w_out];
        let out = &mut dst[r * w_in..(r + 1) * w_in];
        for (o, tap) in taps.taps.iter().enumerate() {
            for &(i, w) in tap {
                out[i] += T::of(w) * row[o];
            }
        }
    }
}

fn apply_cols<T: Scalar>(src: &[T], planes: usize, width: usize, taps: &Taps, dst: &mut Vec<T>) {
    let (h_in, h_out) = (taps.input_len, taps.output_len());
    dst.clear();
    dst.resize(planes * h_out * width, T::zero());
    for p in 0..planes {
        let plane = &src[p * h_in * width..(p + 1) * h_in * width];
        let out = &mut dst[p * h_out * width..(p + 1) * h_out * width];
        for (o, tap) in taps.taps.iter().enumerate() {
            let out_row = &mut out[o * width..(o + 1) * width];
            for &(i, w) in tap {
                let w = T::of(w);
                let in_row = &plane[i * width..(i + 1) * width];
                for (a, &b) in out_row.iter_mut().zip(in_row) {
                    *a += w * b;
                }
            }
        }
    }
}

fn apply_cols_transposed<T: Scalar>(
    src: &[T],
    planes: usize,
    width: usize,
    taps: &Taps,
    dst: &mut Vec<T>,
) {
    let (h_in, h_out) = (taps.input_len, taps.output_len());
    dst.clear();
    dst.resize(planes * h_in * width, T::zero());
    for p in 0..planes {
        let plane = &src[p * h_out * width..(p + 1) * h_out * width];
        let out = &mut dst[p * h_in * width..(p + 1) * h_in * width];
        for (o, tap) in taps.taps.iter().enumerate() {
            let in_row = &plane[o * width..(o + 1) * width];
            for &(i, w) in tap {
                let w = T::of(w);
                let out_row = &mut out[i * width..(i + 1) * width];
                for (a, &b) in out_row.iter_mut().zip(in_row) {
                    *a += w * b;
                }
            }
        }
    }
}

fn check_scale(scale: usize) -> Result<()> {
    if scale == 0 {
        return Err(Error::Config("resize scale must be at least 1".into()));
    }
    Ok(())
}

pub fn resize<T: Scalar>(kind: ResizeKind, x: &Tensor4<T>, scale: usize) -> Result<Tensor4<T>> {
    check_scale(scale)?;
    if scale == 1 {
        return Ok(x.clone());
    }
    let [n, c, h, w] = x.dims();
    let planes = n * c;
    let tx = Taps::upsample(kind, w, scale);
    let ty = Taps::upsample(kind, h, scale);
    let mut tmp = Vec::new();
    apply_rows(x.data(), planes * h, &tx, &mut tmp);
    let mut out = Vec::new();
    apply_cols(&tmp, planes, w * scale, &ty, &mut out);
    Tensor4::from_vec([n, c, h * scale, w * scale], out)
}

/// Antialiased bicubic downscale by an integer factor. Trailing rows and
/// columns beyond a multiple of `scale` are ignored.
pub fn downscale<T: Scalar>(x: &Tensor4<T>, scale: usize) -> Result<Tensor4<T>> {
    check_scale(scale)?;
    if scale == 1 {
        return Ok(x.clone());
    }
    let [n, c, h, w] = x.dims();
    if h < scale || w < scale {
        return Err(Error::Input(format!("{h}x{w} image is smaller than scale {scale}")));
    }
    let planes = n * c;
    let tx = Taps::downsample(w, scale);
    let ty = Taps::downsample(h, scale);
    let mut tmp = Vec::new();
    apply_rows(x.data(), planes * h, &tx, &mut tmp);
    let mut out = Vec::new();
    apply_cols(&tmp, planes, w / scale, &ty, &mut out);
    Tensor4::from_vec([n, c, h / scale, w / scale], out)
}

/// Adjoint of [`resize`]: maps an output-sized gradient to the input dims.
pub fn resize_backward<T: Scalar>(
    kind: ResizeKind,
    input_dims: [usize; 4],
    scale: usize,
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    check_scale(scale)?;
    if scale == 1 {
        return Ok(grad_out.clone());
    }
    let [n, c, h, w] = input_dims;
    let planes = n * c;
    let tx = Taps::upsample(kind, w, scale);
    let ty = Taps::upsample(kind, h, scale);
    let mut tmp = Vec::new();
    apply_cols_transposed(grad_out.data(), planes, w * scale, &ty, &mut tmp);
    let mut out = Vec::new();
    apply_rows_transposed(&tmp, planes * h, &tx, &mut out);
    Tensor4::from_vec(input_dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_kernel_interpolates() {
        assert_eq!(keys_cubic(0.0), 1.0);
        assert_eq!(keys_cubic(1.0), 0.0);
        assert_eq!(keys_cubic(2.0), 0.0);
        for t in [0.1, 0.25, 0.5, 0.8] {
            let s = keys_cubic(t + 1.0) + keys_cubic(t) + keys_cubic(1.0 - t) + keys_cubic(2.0 - t);
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_one_is_identity() {
        let x = Tensor4::<f64>::from_fn([1, 2, 3, 4], |[_, c, y, x]| (c * 12 + y * 4 + x) as f64 * 0.37);
        for kind in [ResizeKind::Bilinear, ResizeKind::Bicubic] {
            assert_eq!(resize(kind, &x, 1).unwrap(), x);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let x = Tensor4::<f32>::full([1, 3, 5, 4], 0.7);
        for kind in [ResizeKind::Bilinear, ResizeKind::Bicubic] {
            for scale in [2, 3, 4] {
                let y = resize(kind, &x, scale).unwrap();
                assert_eq!(y.dims(), [1, 3, 5 * scale, 4 * scale]);
                assert!(y.data().iter().all(|v| (v - 0.7).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn bilinear_x2_matches_half_pixel_reference() {
        // Closed-form half-pixel bilinear weights on a 2x2 input:
        // output coordinate o maps to (o + 0.5)/2 - 0.5 ∈ {-0.25, 0.25, 0.75, 1.25},
        // clamped to [0, 1] before interpolation.
        let (a, b, c, d) = (0.1, 0.9, 0.4, 0.3);
        let x = Tensor4::<f64>::from_vec([1, 1, 2, 2], vec![a, b, c, d]).unwrap();
        let y = resize(ResizeKind::Bilinear, &x, 2).unwrap();
        let pos: [f64; 4] = [0.0, 0.25, 0.75, 1.0];
        for oy in 0..4 {
            for ox in 0..4 {
                let (ty, tx) = (pos[oy], pos[ox]);
                let top = a * (1.0 - tx) + b * tx;
                let bottom = c * (1.0 - tx) + d * tx;
                let expected = top * (1.0 - ty) + bottom * ty;
                assert!((y.at([0, 0, oy, ox]) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn backward_is_transpose() {
        // <resize(x), g> == <x, resize_backward(g)>
        let x = Tensor4::<f64>::from_fn([1, 2, 3, 5], |[_, c, y, x]| ((c + 2 * y + 3 * x) as f64).sin());
        for kind in [ResizeKind::Bilinear, ResizeKind::Bicubic] {
            let y = resize(kind, &x, 3).unwrap();
            let g = Tensor4::from_fn(y.dims(), |[_, c, yy, xx]| ((c * 7 + yy * 5 + xx) as f64).cos());
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let gx = resize_backward(kind, x.dims(), 3, &g).unwrap();
            let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
