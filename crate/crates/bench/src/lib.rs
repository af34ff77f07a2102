//! Benchmarks live in `benches/`; run them with `cargo bench -p mren-bench`.

use mren_core::Tensor4;

/// Deterministic smooth input in [0, 1].
pub fn smooth_input(dims: [usize; 4]) -> Tensor4<f32> {
    Tensor4::from_fn(dims, |[n, c, y, x]| {
        let v = (x as f32 * 0.37 + y as f32 * 0.21 + c as f32 + n as f32 * 1.3).sin();
        0.5 + 0.4 * v
    })
}
