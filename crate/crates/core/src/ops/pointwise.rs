//! Element-wise maps, channel reshuffles, pooling and reductions.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor4};

const GELU_CUBIC: f64 = 0.044715;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// Tanh approximation of GELU.
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let k = T::of(sqrt_2_over_pi());
    let half = T::of(0.5);
    let u = k * (x + T::of(GELU_CUBIC) * x * x * x);
    half * x * (T::one() + u.tanh())
}

pub fn gelu_derivative<T: Scalar>(x: T) -> T {
    let k = T::of(sqrt_2_over_pi());
    let half = T::of(0.5);
    let c = T::of(GELU_CUBIC);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0) * c * x * x)
}

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn gelu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(gelu_scalar)
}

pub fn sigmoid<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(sigmoid_scalar)
}

pub fn add<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.zip_map(y, |a, b| a + b)
}

pub fn mul<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.zip_map(y, |a, b| a * b)
}

/// `alpha · x + y`.
pub fn axpy<T: Scalar>(alpha: T, x: &Tensor4<T>, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.zip_map(y, |a, b| alpha * a + b)
}

pub fn concat_channels<T: Scalar>(parts: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = parts.first().ok_or_else(|| shape_err!("concat_channels: no parts"))?;
    let [n, _, h, w] = first.dims();
    for p in parts {
        let [pn, _, ph, pw] = p.dims();
        if pn != n {
            return Err(shape_err!("concat_channels: batch axis {pn} vs {n}"));
        }
        if (ph, pw) != (h, w) {
            return Err(shape_err!(
                "concat_channels: spatial axes {ph}x{pw} vs {h}x{w}"
            ));
        }
    }
    let total: usize = parts.iter().map(|p| p.channels()).sum();
    let mut data = Vec::with_capacity(n * total * h * w);
    for s in 0..n {
        for p in parts {
            data.extend_from_slice(p.sample(s));
        }
    }
    Tensor4::from_vec([n, total, h, w], data)
}

pub fn slice_channels<T: Scalar>(x: &Tensor4<T>, start: usize, len: usize) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.dims();
    if start + len > c {
        return Err(shape_err!(
            "slice_channels: range {start}..{} exceeds channel axis {c}",
            start + len
        ));
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * len * hw);
    for s in 0..n {
        let sample = x.sample(s);
        data.extend_from_slice(&sample[start * hw..(start + len) * hw]);
    }
    Tensor4::from_vec([n, len, h, w], data)
}

/// Mean over the spatial axes, giving dims `(n, c, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let inv = T::of(1.0 / (h * w) as f64);
    Tensor4::from_fn([n, c, 1, 1], |[s, ch, _, _]| x.plane(s, ch).iter().copied().sum::<T>() * inv)
}

/// Multiplies every plane of `x` by the matching `(n, c, 1, 1)` entry of `scale`.
pub fn channel_scale<T: Scalar>(x: &Tensor4<T>, scale: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.dims();
    if scale.dims() != [n, c, 1, 1] {
        return Err(shape_err!(
            "channel_scale: scale dims {:?} do not broadcast over {:?}",
            scale.dims(),
            x.dims()
        ));
    }
    let hw = h * w;
    let mut out = x.clone();
    for (p, plane) in out.data_mut().chunks_mut(hw.max(1)).enumerate().take(n * c) {
        let k = scale.data()[p];
        plane.iter_mut().for_each(|v| *v *= k);
    }
    Ok(out)
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<T> {
    pred.expect_same_dims(target, "l1_loss")?;
    let total: T = pred.data().iter().zip(target.data()).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(total / T::of(pred.len().max(1) as f64))
}

/// Subgradient of [`l1_loss`] with respect to `pred`; zero where the inputs agree.
pub fn l1_loss_grad<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>, upstream: T) -> Tensor4<T> {
    let k = upstream / T::of(pred.len().max(1) as f64);
    Tensor4::from_vec(
        pred.dims(),
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                let d = a - b;
                if d > T::zero() {
                    k
                } else if d < T::zero() {
                    -k
                } else {
                    T::zero()
                }
            })
            .collect(),
    )
    .expect("same dims")
}
