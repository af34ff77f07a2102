use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{quantize, ImageRGB};

/// Deterministic synthetic image: a few colored sinusoidal gratings under
/// hard-edged rectangles and disks.
pub fn procedural_texture(size: usize, seed: u64) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gratings: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let period = rng.gen_range(4.0..10.0);
            let phase = rng.gen_range(0.0..TAU);
            let color = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            (angle, period, phase, color)
        })
        .collect();
    let n_shapes = rng.gen_range(3..7);
    let shapes: Vec<(bool, [f64; 4], [f64; 3])> = (0..n_shapes)
        .map(|_| {
            let s = size as f64;
            let cx = rng.gen_range(0.0..s);
            let cy = rng.gen_range(0.0..s);
            let rx = rng.gen_range(s / 12.0..s / 4.0);
            let ry = rng.gen_range(s / 12.0..s / 4.0);
            let color = [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
            (rng.gen_bool(0.5), [cx, cy, rx, ry], color)
        })
        .collect();
    ImageRGB::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let mut px = [128.0; 3];
        for (angle, period, phase, color) in &gratings {
            let t = (fx * angle.cos() + fy * angle.sin()) * TAU / period + phase;
            let v = t.sin() * 40.0;
            for c in 0..3 {
                px[c] += v * color[c];
            }
        }
        for (is_disk, [cx, cy, rx, ry], color) in &shapes {
            let (dx, dy) = ((fx - cx) / rx, (fy - cy) / ry);
            let inside = if *is_disk { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
            if inside {
                px = *color;
            }
        }
        [quantize(px[0]), quantize(px[1]), quantize(px[2])]
    })
}
