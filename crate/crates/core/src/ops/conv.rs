//! Stride-1, same-padded 2-D convolution (cross-correlation) lowered to GEMM.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Static description of a convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    /// 1 for ordinary convolution, `in_channels` for depthwise.
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (kernel, kernel), groups: 1, bias: true }
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel: (kernel, kernel),
            groups: channels,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok_kernel = |k: usize| matches!(k, 1 | 3 | 5);
        if !ok_kernel(self.kernel.0) || !ok_kernel(self.kernel.1) {
            return Err(Error::Config(format!("unsupported kernel {:?}", self.kernel)));
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(Error::Config(format!(
                "groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn bias_dims(&self) -> [usize; 4] {
        [self.out_channels, 1, 1, 1]
    }

    /// Learned element count (weights plus bias).
    pub fn param_count(&self) -> usize {
        self.weight_dims().iter().product::<usize>() + if self.bias { self.out_channels } else { 0 }
    }

    /// Patch-matrix rows per group.
    fn patch_rows(&self) -> usize {
        self.in_channels / self.groups * self.kernel.0 * self.kernel.1
    }

    fn check_operands<T: Scalar>(
        &self,
        x: &Tensor4<T>,
        weight: &Tensor4<T>,
        bias: Option<&Tensor4<T>>,
    ) -> Result<()> {
        self.validate()?;
        if x.channels() != self.in_channels {
            return Err(shape_err!(
                "conv2d: input channel axis is {} but layer expects {}",
                x.channels(),
                self.in_channels
            ));
        }
        let wd = self.weight_dims();
        for (axis, (&got, &want)) in
            ["out_channel", "in_channel", "kernel_height", "kernel_width"]
                .iter()
                .zip(weight.dims().iter().zip(wd.iter()))
        {
            if got != want {
                return Err(shape_err!(
                    "conv2d: weight {axis} axis is {got} but layer expects {want}"
                ));
            }
        }
        match (self.bias, bias) {
            (true, Some(b)) if b.dims() != self.bias_dims() => Err(shape_err!(
                "conv2d: bias has dims {:?}, expected {:?}",
                b.dims(),
                self.bias_dims()
            )),
            (true, None) => Err(shape_err!("conv2d: layer expects a bias")),
            (false, Some(_)) => Err(shape_err!("conv2d: layer has no bias")),
            _ => Ok(()),
        }
    }
}

/// Output columns `ox` whose source column `ox + kx - pad` lies inside `0..w`.
fn valid_span(w: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (w + pad).saturating_sub(k).min(w);
    (lo, hi.max(lo))
}

/// Gathers the zero-padded patches of `channels` consecutive planes into a
/// `(channels·kh·kw) × (h·w)` matrix, rows in kernel-row-major order.
fn im2col<T: Scalar>(
    planes: &[T],
    channels: usize,
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    cols: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for c in 0..channels {
        let plane = &planes[c * hw..(c + 1) * hw];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let (lo, hi) = valid_span(w, kx, pw);
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - ph as isize;
                    let out_row = &mut dst[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize || lo == hi {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    out_row[lo..hi].copy_from_slice(&src_row[lo + kx - pw..hi + kx - pw]);
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back onto its source planes (adjoint of [`im2col`]).
fn col2im<T: Scalar>(
    cols: &[T],
    channels: usize,
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    planes: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut planes[c * hw..(c + 1) * hw];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let (lo, hi) = valid_span(w, kx, pw);
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &src[oy * w..(oy + 1) * w];
                    for (d, &v) in dst_row[lo + kx - pw..hi + kx - pw].iter_mut().zip(&src_row[lo..hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Direct per-channel convolution for `groups == channels`; avoids one tiny
/// GEMM per channel.
fn depthwise_forward<T: Scalar>(src: &[T], weight: &[T], h: usize, w: usize, (kh, kw): (usize, usize), dst: &mut [T]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for (c, out) in dst.chunks_mut(hw).enumerate() {
        let plane = &src[c * hw..(c + 1) * hw];
        let wc = &weight[c * kh * kw..(c + 1) * kh * kw];
        for ky in 0..kh {
            for kx in 0..kw {
                let wv = wc[ky * kw + kx];
                let (lo, hi) = valid_span(w, kx, pw);
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w + lo + kx - pw..iy as usize * w + hi + kx - pw];
                    for (o, &v) in out[oy * w + lo..oy * w + hi].iter_mut().zip(src_row) {
                        *o += wv * v;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn depthwise_backward<T: Scalar>(
    src: &[T],
    weight: &[T],
    dy: &[T],
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    dw: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for c in 0..dw.len() / (kh * kw) {
        let plane = &src[c * hw..(c + 1) * hw];
        let dplane = &dy[c * hw..(c + 1) * hw];
        for ky in 0..kh {
            for kx in 0..kw {
                let k = c * kh * kw + ky * kw + kx;
                let wv = weight[k];
                let (lo, hi) = valid_span(w, kx, pw);
                let mut acc = T::zero();
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let s = iy as usize * w + lo + kx - pw;
                    let e = iy as usize * w + hi + kx - pw;
                    let g = &dplane[oy * w + lo..oy * w + hi];
                    acc += plane[s..e].iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
                    if let Some(dx) = dx.as_deref_mut() {
                        for (d, &v) in dx[c * hw + s..c * hw + e].iter_mut().zip(g) {
                            *d += wv * v;
                        }
                    }
                }
                dw[k] = acc;
            }
        }
    }
}

pub fn conv2d<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: Option<&Tensor4<T>>,
    spec: &ConvSpec,
) -> Result<Tensor4<T>> {
    spec.check_operands(x, weight, bias)?;
    let [n, _, h, w] = x.dims();
    let hw = h * w;
    let groups = spec.groups;
    let cin_g = spec.in_channels / groups;
    let cout_g = spec.out_channels / groups;
    let rows = spec.patch_rows();
    let pointwise = spec.kernel == (1, 1);
    let mut out = Tensor4::zeros([n, spec.out_channels, h, w]);
    let sample_len = spec.out_channels * hw;
    if sample_len == 0 {
        return Ok(out);
    }

    let depthwise = cin_g == 1 && cout_g == 1 && groups > 1;
    out.data_mut().par_chunks_mut(sample_len).enumerate().for_each(|(s, dst)| {
        let src = x.sample(s);
        if depthwise {
            depthwise_forward(src, weight.data(), h, w, spec.kernel, dst);
            if let Some(b) = bias {
                for (co, plane) in dst.chunks_mut(hw).enumerate() {
                    let bv = b.data()[co];
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
            return;
        }
        let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); rows * hw] };
        for g in 0..groups {
            let planes = &src[g * cin_g * hw..(g + 1) * cin_g * hw];
            let patches: &[T] = if pointwise {
                planes
            } else {
                im2col(planes, cin_g, h, w, spec.kernel, &mut cols);
                &cols
            };
            let wg = &weight.data()[g * cout_g * rows..(g + 1) * cout_g * rows];
            let og = &mut dst[g * cout_g * hw..(g + 1) * cout_g * hw];
            T::gemm(cout_g, rows, hw, wg, (rows as isize, 1), patches, (hw as isize, 1), T::zero(), og);
        }
        if let Some(b) = bias {
            for (co, plane) in dst.chunks_mut(hw).enumerate() {
                let bv = b.data()[co];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    Ok(out)
}

/// Gradients of a convolution with respect to its operands.
pub struct ConvGrads<T> {
    pub input: Option<Tensor4<T>>,
    pub weight: Tensor4<T>,
    pub bias: Option<Tensor4<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    spec: &ConvSpec,
    grad_out: &Tensor4<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let [n, _, h, w] = x.dims();
    if grad_out.dims() != [n, spec.out_channels, h, w] {
        return Err(shape_err!("conv2d backward: gradient dims {:?}", grad_out.dims()));
    }
    let hw = h * w;
    let groups = spec.groups;
    let cin_g = spec.in_channels / groups;
    let cout_g = spec.out_channels / groups;
    let rows = spec.patch_rows();
    let pointwise = spec.kernel == (1, 1);
    let wlen = weight.len();
    let depthwise = cin_g == 1 && cout_g == 1 && groups > 1;

    // Per-sample partial weight gradients, reduced afterwards in sample order.
    let per_sample: Vec<(Vec<T>, Option<Vec<T>>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let src = x.sample(s);
            let dy = grad_out.sample(s);
            let mut dw = vec![T::zero(); wlen];
            let mut dx = need_input_grad.then(|| vec![T::zero(); spec.in_channels * hw]);
            if depthwise {
                depthwise_backward(src, weight.data(), dy, h, w, spec.kernel, &mut dw, dx.as_deref_mut());
                return (dw, dx);
            }
            let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); rows * hw] };
            let mut dcols = vec![T::zero(); if need_input_grad { rows * hw } else { 0 }];
            for g in 0..groups {
                let planes = &src[g * cin_g * hw..(g + 1) * cin_g * hw];
                let patches: &[T] = if pointwise {
                    planes
                } else {
                    im2col(planes, cin_g, h, w, spec.kernel, &mut cols);
                    &cols
                };
                let dyg = &dy[g * cout_g * hw..(g + 1) * cout_g * hw];
                let dwg = &mut dw[g * cout_g * rows..(g + 1) * cout_g * rows];
                // dW_g = dY_g · patchesᵀ
                T::gemm(cout_g, hw, rows, dyg, (hw as isize, 1), patches, (1, hw as isize), T::zero(), dwg);
                if let Some(dx) = dx.as_mut() {
                    let wg = &weight.data()[g * cout_g * rows..(g + 1) * cout_g * rows];
                    let dxg = &mut dx[g * cin_g * hw..(g + 1) * cin_g * hw];
                    if pointwise {
                        T::gemm(rows, cout_g, hw, wg, (1, rows as isize), dyg, (hw as isize, 1), T::zero(), dxg);
                    } else {
                        T::gemm(rows, cout_g, hw, wg, (1, rows as isize), dyg, (hw as isize, 1), T::zero(), &mut dcols);
                        col2im(&dcols, cin_g, h, w, spec.kernel, dxg);
                    }
                }
            }
            (dw, dx)
        })
        .collect();

    let mut dweight = Tensor4::zeros(weight.dims());
    let mut dinput = need_input_grad.then(|| Tensor4::zeros(x.dims()));
    for (s, (dw, dx)) in per_sample.into_iter().enumerate() {
        for (a, b) in dweight.data_mut().iter_mut().zip(dw) {
            *a += b;
        }
        if let (Some(acc), Some(dx)) = (dinput.as_mut(), dx) {
            let chw = spec.in_channels * hw;
            acc.data_mut()[s * chw..(s + 1) * chw].copy_from_slice(&dx);
        }
    }

    let dbias = spec.bias.then(|| {
        let mut db = Tensor4::zeros(spec.bias_dims());
        for s in 0..n {
            for co in 0..spec.out_channels {
                db.data_mut()[co] += grad_out.plane(s, co).iter().copied().sum::<T>();
            }
        }
        db
    });

    Ok(ConvGrads { input: dinput, weight: dweight, bias: dbias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random<T: Scalar>(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4<T> {
        Tensor4::from_fn(dims, |_| T::of(rng.gen_range(-1.0..1.0)))
    }

    /// Six nested loops straight from the definition of zero-padded cross-correlation.
    fn reference_conv(
        x: &Tensor4<f64>,
        weight: &Tensor4<f64>,
        bias: Option<&Tensor4<f64>>,
        spec: &ConvSpec,
    ) -> Tensor4<f64> {
        let [n, _, h, w] = x.dims();
        let (kh, kw) = spec.kernel;
        let cin_g = spec.in_channels / spec.groups;
        let cout_g = spec.out_channels / spec.groups;
        Tensor4::from_fn([n, spec.out_channels, h, w], |[s, co, oy, ox]| {
            let g = co / cout_g;
            let mut acc = bias.map_or(0.0, |b| b.data()[co]);
            for ci in 0..cin_g {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = oy as isize + ky as isize - (kh / 2) as isize;
                        let ix = ox as isize + kx as isize - (kw / 2) as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        acc += weight.at([co, ci, ky, kx])
                            * x.at([s, g * cin_g + ci, iy as usize, ix as usize]);
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_pointwise_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random::<f32>([2, 3, 4, 5], &mut rng);
        let spec = ConvSpec::new(3, 3, 1);
        let w = Tensor4::from_fn([3, 3, 1, 1], |[o, i, _, _]| if o == i { 1.0 } else { 0.0 });
        let b = Tensor4::zeros([3, 1, 1, 1]);
        let y = conv2d(&x, &w, Some(&b), &spec).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random::<f32>([1, 2, 5, 5], &mut rng);
        let spec = ConvSpec::new(2, 3, 3);
        let w = Tensor4::zeros(spec.weight_dims());
        let b = Tensor4::from_vec([3, 1, 1, 1], vec![0.5, -1.0, 2.0]).unwrap();
        let y = conv2d(&x, &w, Some(&b), &spec).unwrap();
        for c in 0..3 {
            assert!(y.plane(0, c).iter().all(|&v| v == b.data()[c]));
        }
    }

    #[test]
    fn matches_nested_loop_reference_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::new(2, 3, 3);
        let x = random::<f64>([1, 2, 4, 4], &mut rng);
        let w = random::<f64>(spec.weight_dims(), &mut rng);
        let b = random::<f64>(spec.bias_dims(), &mut rng);
        let expected = reference_conv(&x, &w, Some(&b), &spec);
        let got = conv2d(&x.cast::<f32>(), &w.cast(), Some(&b.cast()), &spec).unwrap();
        assert!(got.cast::<f64>().max_abs_diff(&expected).unwrap() < 1e-6);
    }

    #[test]
    fn all_kernels_and_groupings_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in [1, 3, 5] {
            for spec in [ConvSpec::new(4, 6, k), ConvSpec::depthwise(4, k), ConvSpec {
                groups: 2,
                ..ConvSpec::new(4, 6, k)
            }] {
                let x = random::<f64>([2, 4, 6, 5], &mut rng);
                let w = random::<f64>(spec.weight_dims(), &mut rng);
                let b = random::<f64>(spec.bias_dims(), &mut rng);
                let got = conv2d(&x, &w, Some(&b), &spec).unwrap();
                let expected = reference_conv(&x, &w, Some(&b), &spec);
                assert!(got.max_abs_diff(&expected).unwrap() < 1e-12, "{spec:?}");
            }
        }
    }

    #[test]
    fn depthwise_equals_per_channel_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ConvSpec::depthwise(3, 3);
        let x = random::<f32>([1, 3, 7, 6], &mut rng);
        let w = random::<f32>(spec.weight_dims(), &mut rng);
        let b = random::<f32>(spec.bias_dims(), &mut rng);
        let got = conv2d(&x, &w, Some(&b), &spec).unwrap();
        let single = ConvSpec::new(1, 1, 3);
        for c in 0..3 {
            let xc = Tensor4::from_vec([1, 1, 7, 6], x.plane(0, c).to_vec()).unwrap();
            let wc = Tensor4::from_vec([1, 1, 3, 3], w.data()[c * 9..(c + 1) * 9].to_vec()).unwrap();
            let bc = Tensor4::scalar(b.data()[c]);
            let yc = conv2d(&xc, &wc, Some(&bc), &single).unwrap();
            let diff = yc
                .data()
                .iter()
                .zip(got.plane(0, c))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(diff < 1e-6);
        }
    }

    #[test]
    fn shape_errors_name_the_axis() {
        let spec = ConvSpec::new(3, 4, 3);
        let x = Tensor4::<f32>::zeros([1, 2, 4, 4]);
        let w = Tensor4::zeros(spec.weight_dims());
        let b = Tensor4::zeros(spec.bias_dims());
        let err = conv2d(&x, &w, Some(&b), &spec).unwrap_err().to_string();
        assert!(err.contains("channel"), "{err}");
        let x = Tensor4::<f32>::zeros([1, 3, 4, 4]);
        let w = Tensor4::zeros([4, 3, 3, 1]);
        let err = conv2d(&x, &w, Some(&b), &spec).unwrap_err().to_string();
        assert!(err.contains("kernel_width"), "{err}");
    }

    #[test]
    fn invalid_groups_rejected() {
        let spec = ConvSpec { groups: 3, ..ConvSpec::new(4, 6, 3) };
        assert!(spec.validate().is_err());
    }
}
