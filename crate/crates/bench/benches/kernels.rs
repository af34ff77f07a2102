use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mren_bench::smooth_input;
use mren_core::data::{procedural_texture, psnr_y, ssim_y};
use mren_core::ops::{conv2d, resize, ConvSpec, ResizeKind};
use mren_core::{init_model, ModelConfig, Tape};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    let x = smooth_input([1, 60, 48, 48]);
    for (name, spec) in [
        ("3x3", ConvSpec::new(60, 60, 3)),
        ("1x1", ConvSpec::new(60, 60, 1)),
        ("depthwise5x5", ConvSpec::depthwise(60, 5)),
    ] {
        let w = smooth_input(spec.weight_dims());
        let b = smooth_input(spec.bias_dims());
        group.bench_function(name, |bch| bch.iter(|| conv2d(black_box(&x), &w, Some(&b), &spec).unwrap()));
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    group.sample_size(10);
    for scale in [2, 4] {
        let model = init_model::<f32>(&ModelConfig::with_scale(scale), 0).unwrap();
        let x = smooth_input([1, 3, 32, 32]);
        group.bench_with_input(BenchmarkId::new("infer", scale), &x, |b, x| b.iter(|| model.infer(x).unwrap()));
    }
    let model = init_model::<f32>(&ModelConfig { scale: 2, n_mreb: 2, ..Default::default() }, 0).unwrap();
    let x = smooth_input([4, 3, 32, 32]);
    group.bench_function("train_step_graph", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let v = tape.input(x.clone());
            let out = model.forward(&mut tape, v).unwrap();
            let loss = tape.sum(out);
            tape.backward(loss).unwrap()
        })
    });
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let a = procedural_texture(256, 1);
    let b = procedural_texture(256, 2);
    c.bench_function("psnr_y_256", |bch| bch.iter(|| psnr_y(black_box(&a), &b, 4).unwrap()));
    c.bench_function("ssim_y_256", |bch| bch.iter(|| ssim_y(black_box(&a), &b, 4).unwrap()));
    let x = smooth_input([1, 3, 64, 64]);
    c.bench_function("bicubic_x4_64", |bch| bch.iter(|| resize(ResizeKind::Bicubic, black_box(&x), 4).unwrap()));
}

criterion_group!(benches, conv, forward, metrics);
criterion_main!(benches);
