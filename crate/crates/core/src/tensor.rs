//! Dense NCHW tensors in single or double precision.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{shape_err, Result};

/// Storage precision of a tensor, also used as the checkpoint dtype code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn dtype_code(self) -> u8 {
        match self {
            Precision::Single => 0,
            Precision::Double => 1,
        }
    }

    pub fn from_dtype_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Precision::Single),
            1 => Some(Precision::Double),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

/// Element type of a [`Tensor4`]. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = a · b + beta · c` for row-major slices described by strides.
    ///
    /// `a` is `m × k`, `b` is `k × n`, `c` is `m × n` with row stride `n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    a_len: usize,
    a_strides: (isize, isize),
    b_len: usize,
    b_strides: (isize, isize),
    c_len: usize,
) {
    let last = |rows: usize, cols: usize, (rs, cs): (isize, isize)| -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows as isize - 1) as usize * rs as usize + (cols as isize - 1) as usize * cs as usize + 1
        }
    };
    assert!(a_strides.0 >= 0 && a_strides.1 >= 0 && b_strides.0 >= 0 && b_strides.1 >= 0);
    assert!(last(m, k, a_strides) <= a_len, "gemm: lhs out of bounds");
    assert!(last(k, n, b_strides) <= b_len, "gemm: rhs out of bounds");
    assert!(m * n <= c_len, "gemm: output out of bounds");
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;

    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        a_strides: (isize, isize),
        b: &[f32],
        b_strides: (isize, isize),
        beta: f32,
        c: &mut [f32],
    ) {
        check_gemm_bounds(m, k, n, a.len(), a_strides, b.len(), b_strides, c.len());
        // SAFETY: every index touched by the kernel was bounds-checked above.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                a_strides.0,
                a_strides.1,
                b.as_ptr(),
                b_strides.0,
                b_strides.1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;

    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        a_strides: (isize, isize),
        b: &[f64],
        b_strides: (isize, isize),
        beta: f64,
        c: &mut [f64],
    ) {
        check_gemm_bounds(m, k, n, a.len(), a_strides, b.len(), b_strides, c.len());
        // SAFETY: every index touched by the kernel was bounds-checked above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                a_strides.0,
                a_strides.1,
                b.as_ptr(),
                b_strides.0,
                b_strides.1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Rank-4 array in (batch, channel, height, width) order, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: [usize; 4], value: T) -> Self {
        Tensor4 { dims, data: vec![value; dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(shape_err!(
                "data length {} does not match dims {:?} ({} elements)",
                data.len(),
                dims,
                expected
            ));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    pub fn scalar(value: T) -> Self {
        Tensor4 { dims: [1, 1, 1, 1], data: vec![value] }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, [n, c, y, x]: [usize; 4]) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], value: T) {
        let i = self.index(idx);
        self.data[i] = value;
    }

    /// Contiguous `(height·width)` plane of one channel of one sample.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    /// Contiguous `(channels·height·width)` block of one sample.
    pub fn sample(&self, n: usize) -> &[T] {
        let chw = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[n * chw..(n + 1) * chw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_dims(other, "zip_map")?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_dims(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.expect_same_dims(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 { dims: self.dims, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    pub fn expect_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims != other.dims {
            let axis = ["batch", "channel", "height", "width"]
                .iter()
                .zip(self.dims.iter().zip(other.dims.iter()))
                .find(|(_, (a, b))| a != b)
                .map(|(name, _)| *name)
                .unwrap_or("?");
            return Err(shape_err!(
                "{what}: {axis} axis differs ({:?} vs {:?})",
                self.dims,
                other.dims
            ));
        }
        Ok(())
    }
}
