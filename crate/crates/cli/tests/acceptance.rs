//! End-to-end acceptance checks. Run with
//! `cargo test -p mren-cli --test acceptance`; prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mren_cli::commands::{cmd_ablate, cmd_analyze, cmd_infer};
use mren_cli::{AblateArgs, AnalyzeArgs, InferArgs};
use mren_core::analysis::{
    costs_of_trace, estimate_flops, reference, FlopConvention,
};
use mren_core::data::{
    gaussian_window, procedural_texture, psnr_planes, psnr_y, save_png, ssim_y, upscale_bicubic,
    ImageRGB, TrainingSet, YPlane,
};
use mren_core::gradcheck::{grad_check, grad_check_fn, random_tensor, Primitive, Probes};
use mren_core::graph::{ShapeTrace, Traced};
use mren_core::model::blocks::{self, AttentionState};
use mren_core::model::init_params;
use mren_core::ops::{self, ResizeKind};
use mren_core::train::{
    evaluate, load_checkpoint, save_checkpoint, Checkpoint, TrainConfig, Trainer, Upscaler,
};
use mren_core::{init_model, ConvSpec, ModelConfig, MrenModel, ParamStore, Tape, Tensor4, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn block_params<F>(seed: u64, build: F) -> Result<ParamStore<f64>, String>
where
    F: FnOnce(&mut ShapeTrace) -> mren_core::Result<[usize; 4]>,
{
    let mut trace = ShapeTrace::new();
    ok(build(&mut trace))?;
    ok(init_params(&ok(trace.conv_layers())?, seed))
}

fn gradient_suite() -> Check {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (i, p) in Primitive::ALL.into_iter().enumerate() {
        for seed in 0..5 {
            let err = ok(grad_check(p, [2, 3, 5, 4], 100 * i as u64 + seed))?;
            ensure!(err < 1e-4, "{p:?} seed {seed}: relative error {err:.2e}");
            worst = worst.max(err);
        }
    }

    let cfg = ModelConfig { base_channels: 8, branch_channels: 2, distill_channels: 4, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random_tensor([1, 8, 4, 4], &mut rng);
    let prev = random_tensor([1, 4, 4, 4], &mut rng);

    let params = block_params(1, |g| blocks::wsilbv(g, "w", &[1, 8, 4, 4], 4))?;
    let err = ok(grad_check_fn(std::slice::from_ref(&x), &params, |t, p, v| {
        blocks::wsilbv(&mut Traced::new(t, p), "w", &v[0], 4)
    }, Probes::All, 1))?;
    ensure!(err < 1e-4, "wsilbv: {err:.2e}");
    worst = worst.max(err);

    for variant in [Variant::Full, Variant::Osa, Variant::Oca, Variant::Scnc] {
        let cfg = ModelConfig { variant, ..cfg.clone() };
        let params = block_params(2, |g| blocks::scacb(g, "s", &[1, 8, 4, 4], &cfg))?;
        let err = ok(grad_check_fn(std::slice::from_ref(&x), &params, |t, p, v| {
            blocks::scacb(&mut Traced::new(t, p), "s", &v[0], &cfg)
        }, Probes::All, 2))?;
        ensure!(err < 1e-4, "scacb {variant}: {err:.2e}");
        worst = worst.max(err);
    }

    for variant in [Variant::Full, Variant::DistillOnly, Variant::DistillSigmoid, Variant::DistillSkip] {
        let cfg = ModelConfig { variant, ..cfg.clone() };
        let params = block_params(3, |g| {
            Ok(blocks::dracb(g, "d", &[1, 8, 4, 4], &AttentionState::empty(), &cfg)?.0)
        })?;
        let err = ok(grad_check_fn(&[x.clone(), prev.clone()], &params, |t, p, v| {
            let mut g = Traced::new(t, p);
            Ok(blocks::dracb(&mut g, "d", &v[0], &AttentionState(Some(v[1])), &cfg)?.0)
        }, Probes::All, 3))?;
        ensure!(err < 1e-4, "dracb {variant}: {err:.2e}");
        worst = worst.max(err);
    }

    // Every input coordinate and eight random entries of each parameter tensor.
    let net_cfg = ModelConfig { scale: 2, n_mreb: 1, ..cfg.clone() };
    let mut net_errors = Vec::new();
    for seed in 0..5 {
        let model = ok(init_model::<f64>(&net_cfg, 13 + seed))?;
        let lr = Tensor4::from_fn([1, 3, 6, 6], |_| rng.gen_range(0.0..1.0));
        let err = ok(grad_check_fn(
            &[lr],
            &model.params,
            |t, p, v| blocks::mren_forward(&mut Traced::new(t, p), &v[0], &net_cfg),
            Probes::Sample(8),
            50 + seed,
        ))?;
        net_errors.push(err);
    }
    let net_worst = net_errors.iter().copied().fold(0.0, f64::max);
    ensure!(net_worst < 1e-4, "1-MREB x2 network: per-seed max relative errors {}", net_errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", "));
    worst = worst.max(net_worst);

    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:.1?}");
    Ok(format!("max relative error {worst:.2e}, {elapsed:.1?}"))
}

fn residual_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for scale in [2, 3, 4] {
        let mut model = ok(init_model::<f64>(&ModelConfig { scale, n_mreb: 1, ..Default::default() }, 2))?;
        model.zero_tail();
        let x = Tensor4::from_fn([1, 3, 7, 5], |_| rng.gen_range(0.0..1.0));
        let expected = ok(ops::resize(ResizeKind::Bicubic, &x, scale))?;
        ensure!(ok(model.infer(&x))? == expected, "x{scale}: forward differs from bicubic");
    }

    let dir = ok(tempfile::tempdir())?;
    let img = procedural_texture(24, 4).crop(24, 18).map_err(|e| e.to_string())?;
    let input = dir.path().join("in.png");
    ok(save_png(&img, &input))?;
    let mut worst = 0;
    for scale in [2, 3, 4] {
        let mut model: MrenModel<f32> = ok(init_model(&ModelConfig { scale, n_mreb: 1, ..Default::default() }, 2))?;
        model.zero_tail();
        let ckpt = dir.path().join(format!("x{scale}.ckpt"));
        ok(save_checkpoint(&ckpt, &Checkpoint::weights_only(model)))?;
        let output = dir.path().join(format!("x{scale}.png"));
        let args = InferArgs { model: ckpt, input: input.clone(), output: output.clone() };
        ok(cmd_infer(&args, &mut std::io::sink()))?;
        let sr = ok(mren_core::data::load_png(&output))?;
        let bic = ok(upscale_bicubic(&img, scale))?;
        ensure!(sr.width() == bic.width() && sr.height() == bic.height(), "x{scale}: output dims");
        let d = sr.data().iter().zip(bic.data()).map(|(a, b)| (*a as i32 - *b as i32).abs()).max().unwrap_or(0);
        ensure!(d <= 1, "x{scale}: infer differs from bicubic by {d} levels");
        worst = worst.max(d);
    }
    Ok(format!("bit-exact in f64 for x2/x3/x4; infer max deviation {worst} level(s)"))
}

fn dracb_oracle() -> Check {
    let cfg = ModelConfig { base_channels: 8, distill_channels: 4, branch_channels: 2, ..Default::default() };
    let mut params = block_params(0, |g| {
        Ok(blocks::dracb(g, "d", &[1, 8, 3, 3], &AttentionState::empty(), &cfg)?.0)
    })?;
    params.get_mut("d.distill.weight").expect("present").value.fill(0.0);
    params.get_mut("d.distill.bias").expect("present").value.fill(1.0);

    let mut tape = Tape::new();
    let mut g = Traced::new(&mut tape, &params);
    let x = g.tape.input(Tensor4::full([1, 8, 3, 3], 0.3));
    let prev = g.tape.input(Tensor4::full([1, 4, 3, 3], 1.0));
    let (out, _) = ok(blocks::dracb(&mut g, "d", &x, &AttentionState(Some(prev)), &cfg))?;
    let fused: f64 = 1.0 + 0.2;
    let closed = fused / (1.0 + (-fused).exp());
    let values = tape.value(out).data();
    let got = values[0];
    ensure!(values.iter().all(|v| *v == got), "output not constant");
    ensure!((got - 0.92223).abs() < 1e-5, "got {got:.6}, expected 0.92223");
    ensure!((got - closed).abs() < 1e-12, "got {got}, closed form {closed}");

    let cfg = ModelConfig { scale: 2, n_mreb: 2, w_comm: 0.0, ..Default::default() };
    let full = ok(init_model::<f64>(&cfg, 9))?;
    let no_comm = MrenModel {
        config: ModelConfig { variant: Variant::DistillSigmoid, ..cfg.clone() },
        params: full.params.clone(),
    };
    ok(no_comm.check_params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = Tensor4::from_fn([1, 3, 6, 6], |_| rng.gen_range(0.0..1.0));
    ensure!(ok(full.infer(&x))? == ok(no_comm.infer(&x))?, "w = 0 differs from the no-communication variant");
    Ok(format!("constant output {got:.6}; w = 0 network identical to no-communication variant"))
}

fn parameter_accounting() -> Check {
    let args = AnalyzeArgs {
        config: None,
        scale: None,
        resolution: (1280, 720),
        convention: FlopConvention::Mac,
        csv: None,
    };
    let mut printed = Vec::new();
    let outcome = ok(cmd_analyze(&args, &mut printed))?;
    print!("{}", String::from_utf8_lossy(&printed));

    let sweep = &outcome.mreb_sweep;
    ensure!(sweep.iter().map(|s| s.0).eq(3..=8), "sweep covers {:?}", sweep);
    let step = sweep[1].1 - sweep[0].1;
    ensure!(sweep.windows(2).all(|w| w[1].1 - w[0].1 == step), "increments not constant: {sweep:?}");

    let total = outcome.params.total as f64;
    let per = outcome.params.per_mreb().unwrap_or(0);
    ensure!(per == step, "per-MREB subtotal {per} differs from the sweep increment {step}");
    let within = |v: f64, r: usize| (v - r as f64).abs() <= 0.15 * r as f64;
    ensure!(within(total, reference::TOTAL_PARAMS_X4), "total {total} outside 298K ± 15%");
    ensure!(within(per as f64, reference::PARAMS_PER_MREB), "per-MREB {per} outside 34K ± 15%");

    let of = |v: Variant| outcome.coordination.iter().find(|c| c.0 == v).map(|c| c.1).unwrap_or(0);
    let (osa, oca, scnc, full) = (of(Variant::Osa), of(Variant::Oca), of(Variant::Scnc), of(Variant::Full));
    ensure!(osa < full && full == scnc && scnc < oca, "ordering osa {osa} full {full} scnc {scnc} oca {oca}");
    let d = &outcome.distillation;
    ensure!(d.len() == 4 && d.iter().all(|v| v.1 == d[0].1), "distillation totals differ: {d:?}");
    Ok(format!(
        "total {total}, per-MREB {per} (step {step}), osa {osa} < full {full} = scnc {scnc} < oca {oca}, distillation {}",
        d[0].1
    ))
}

fn luma(p: [u8; 3]) -> f64 {
    16.0 + (65.481 * p[0] as f64 + 128.553 * p[1] as f64 + 24.966 * p[2] as f64) / 255.0
}

fn psnr_naive(a: &ImageRGB, b: &ImageRGB, shave: usize) -> f64 {
    let (mut sum, mut n) = (0.0, 0.0);
    for y in shave..a.height() - shave {
        for x in shave..a.width() - shave {
            let d = luma(a.pixel(x, y)) - luma(b.pixel(x, y));
            sum += d * d;
            n += 1.0;
        }
    }
    if sum == 0.0 {
        100.0
    } else {
        10.0 * (255.0f64 * 255.0 / (sum / n)).log10()
    }
}

fn ssim_naive(a: &ImageRGB, b: &ImageRGB, shave: usize) -> f64 {
    let g1 = gaussian_window();
    let (w, h) = (a.width() - 2 * shave, a.height() - 2 * shave);
    let ya = |x: usize, y: usize| luma(a.pixel(x + shave, y + shave));
    let yb = |x: usize, y: usize| luma(b.pixel(x + shave, y + shave));
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let (mut total, mut count) = (0.0, 0.0);
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut ma, mut mb, mut va, mut vb, mut cov) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let g = g1[i] * g1[j];
                    ma += g * ya(ox + i, oy + j);
                    mb += g * yb(ox + i, oy + j);
                }
            }
            for j in 0..11 {
                for i in 0..11 {
                    let g = g1[i] * g1[j];
                    let (da, db) = (ya(ox + i, oy + j) - ma, yb(ox + i, oy + j) - mb);
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    total / count
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random_image = |rng: &mut ChaCha8Rng| ImageRGB::from_fn(64, 64, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
    let (mut dp, mut ds) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let a = random_image(&mut rng);
        let b = if i % 2 == 0 {
            random_image(&mut rng)
        } else {
            ImageRGB::from_fn(64, 64, |x, y| a.pixel(x, y).map(|v| v.saturating_add(rng.gen_range(0..24))))
        };
        let scale = 2 + i % 3;
        dp = dp.max((ok(psnr_y(&a, &b, scale))? - psnr_naive(&a, &b, scale)).abs());
        ds = ds.max((ok(ssim_y(&a, &b, scale))? - ssim_naive(&a, &b, scale)).abs());
    }
    ensure!(dp < 1e-6, "psnr deviates by {dp:.2e} dB");
    ensure!(ds < 1e-5, "ssim deviates by {ds:.2e}");

    let a = random_image(&mut rng);
    let same_psnr = ok(psnr_y(&a, &a, 4))?;
    let same_ssim = ok(ssim_y(&a, &a, 4))?;
    ensure!(same_psnr == 100.0, "identical images give {same_psnr} dB");
    ensure!(same_ssim == 1.0, "identical images give SSIM {same_ssim}");

    let base: Vec<f64> = (0..400).map(|i| 16.0 + (i % 200) as f64).collect();
    let pa = YPlane { width: 20, height: 20, data: base.clone() };
    let pb = YPlane { width: 20, height: 20, data: base.iter().map(|v| v + 1.0).collect() };
    let offset = ok(psnr_planes(&pa, &pb))?;
    ensure!((offset - 48.1308).abs() < 1e-3, "constant offset gives {offset:.4} dB");
    Ok(format!("max |dPSNR| {dp:.1e} dB, max |dSSIM| {ds:.1e}; cap 100 dB; offset {offset:.4} dB"))
}

struct ToyRun {
    dir: tempfile::TempDir,
    elapsed: Duration,
    losses: Vec<f64>,
    model: MrenModel<f32>,
}

fn toy_images() -> Vec<(String, ImageRGB)> {
    (0..8).map(|i| (format!("texture{i}"), procedural_texture(96, i))).collect()
}

fn toy_config() -> (ModelConfig, TrainConfig) {
    let model = ModelConfig { scale: 2, n_mreb: 2, ..Default::default() };
    let train = TrainConfig {
        epochs: 8,
        iterations_per_epoch: 50,
        batch: 4,
        patch: 64,
        lr0: 2e-3,
        seed: 1,
        ..Default::default()
    };
    (model, train)
}

fn toy_run() -> Result<ToyRun, String> {
    let (mc, tc) = toy_config();
    let set = ok(TrainingSet::new(toy_images(), mc.scale, tc.patch))?;
    let dir = ok(tempfile::tempdir())?;
    let started = Instant::now();
    let mut trainer = ok(Trainer::new(ok(init_model::<f32>(&mc, 1))?, tc))?;
    ok(trainer.fit(&set, Some(dir.path()), |_| {}))?;
    Ok(ToyRun { dir, elapsed: started.elapsed(), losses: trainer.log.losses(), model: trainer.model })
}

fn toy_training(run: &Result<ToyRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    ensure!(run.losses.len() == 400, "{} iterations logged", run.losses.len());
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (start, end) = (mean(&run.losses[..50]), mean(&run.losses[350..]));
    let ratio = end / start;
    ensure!(ratio < 0.5, "windowed loss {start:.5} -> {end:.5}, ratio {ratio:.3}");

    let images = toy_images();
    let net = ok(evaluate(&Upscaler::Network(&run.model), &images, 2))?;
    let bic = ok(evaluate(&Upscaler::<f32>::Bicubic, &images, 2))?;
    let gain = net.mean_psnr - bic.mean_psnr;
    ensure!(gain >= 0.2, "network {:.2} dB vs bicubic {:.2} dB", net.mean_psnr, bic.mean_psnr);
    ensure!(run.elapsed < Duration::from_secs(600), "took {:.1?}", run.elapsed);
    Ok(format!(
        "loss ratio {ratio:.3}; PSNR {:.2} dB vs bicubic {:.2} dB (+{gain:.2}); {:.0?}",
        net.mean_psnr, bic.mean_psnr, run.elapsed
    ))
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn determinism(run: &Result<ToyRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let again = toy_run()?;
    for epoch in 1..=8 {
        let name = format!("epoch_{epoch:04}.ckpt");
        ensure!(
            read(&run.dir.path().join(&name))? == read(&again.dir.path().join(&name))?,
            "{name} differs between identical runs"
        );
    }

    let last: PathBuf = run.dir.path().join("last.ckpt");
    let loaded: Checkpoint<f32> = ok(load_checkpoint(&last))?;
    let x = procedural_texture(20, 99).to_tensor::<f32>();
    ensure!(ok(loaded.model.infer(&x))? == ok(run.model.infer(&x))?, "reloaded model forward differs");
    ensure!(ok(loaded.to_bytes())? == read(&last)?, "re-serialized checkpoint differs");

    let (mc, _) = toy_config();
    let set = ok(TrainingSet::new(toy_images(), mc.scale, 64))?;
    let midway: Checkpoint<f32> = ok(load_checkpoint(run.dir.path().join("epoch_0004.ckpt")))?;
    let resumed_dir = ok(tempfile::tempdir())?;
    let mut resumed = ok(Trainer::resume(midway, None))?;
    ok(resumed.fit(&set, Some(resumed_dir.path()), |_| {}))?;
    ensure!(read(&resumed_dir.path().join("last.ckpt"))? == read(&last)?, "resumed run diverges");
    ensure!(resumed.log.losses() == run.losses[200..], "resumed losses differ");
    Ok("8 checkpoints byte-identical across runs; reload bit-exact; resume from epoch 4 matches".into())
}

fn ablation_harness() -> Check {
    let dir = ok(tempfile::tempdir())?;
    for i in 0..4 {
        ok(save_png(&procedural_texture(48, 20 + i), dir.path().join(format!("t{i}.png"))))?;
    }
    let mut total = 0;
    for axis in ["mreb", "w", "scacb", "dracb"] {
        let args = AblateArgs {
            axis: axis.into(),
            values: None,
            data_dir: Some(dir.path().to_path_buf()),
            budget_iters: 10,
            config: None,
            scale: Some(2),
            patch: 24,
            batch: 2,
            seed: 0,
            csv: None,
        };
        let rows = ok(cmd_ablate(&args, &mut std::io::sink()))?;
        for r in &rows {
            ensure!(r.losses.len() == 10, "{axis}={}: {} steps", r.value, r.losses.len());
            ensure!(r.losses.iter().all(|l| l.is_finite()), "{axis}={}: non-finite loss", r.value);
        }
        total += rows.len();
    }
    ensure!(total == 6 + 11 + 4 + 4, "{total} variants run");
    Ok(format!("{total} variants, 10 optimizer steps each, all finite"))
}

fn flops_estimator() -> Check {
    let single = ConvSpec::new(3, 60, 3);
    let mut trace = ShapeTrace::new();
    let cfg = ModelConfig::with_scale(2);
    let x = [1usize, 3, 360, 640];
    ok(mren_core::graph::Graph::conv(&mut trace, "c", &x, single))?;
    let costs = costs_of_trace(&trace);
    let expected = (640 * 360 * 60 * 3 * 9) as u64;
    ensure!(costs.len() == 1 && costs[0].macs == expected, "single conv {:?} vs {expected}", costs);

    let mac = ok(estimate_flops(&cfg, (1280, 720), FlopConvention::Mac))?;
    let mac2 = ok(estimate_flops(&cfg, (1280, 720), FlopConvention::Mac2))?;
    ensure!(mac2.total() == 2 * mac.total(), "mac2 {} vs mac {}", mac2.total(), mac.total());

    let args = AnalyzeArgs {
        config: None,
        scale: Some(2),
        resolution: (1280, 720),
        convention: FlopConvention::Mac,
        csv: None,
    };
    let mut printed = Vec::new();
    ok(cmd_analyze(&args, &mut printed))?;
    let text = String::from_utf8_lossy(&printed);
    for line in text.lines().skip_while(|l| !l.starts_with("FLOPs")) {
        println!("{line}");
    }
    ensure!(text.contains("reference 23.8G"), "report lacks the reference figure");
    Ok(format!(
        "single conv {expected} MACs; x2 at 1280x720: {:.1}G (mac), {:.1}G (mac2) vs reference 23.8G, informational",
        mac.total() as f64 / 1e9,
        mac2.total() as f64 / 1e9
    ))
}

fn main() {
    // Optional criterion numbers select a subset, e.g. `-- 6 7`.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut toy: Option<Result<ToyRun, String>> = None;
    let toy_once = |toy: &mut Option<Result<ToyRun, String>>| {
        if toy.is_none() {
            *toy = Some(toy_run());
        }
    };

    let mut failures = 0;
    for n in 1..=9 {
        if !wanted(n) {
            continue;
        }
        if n == 6 || n == 7 {
            toy_once(&mut toy);
        }
        let name = [
            "gradient suite",
            "residual identity",
            "attention carry oracle",
            "parameter accounting",
            "metric oracles",
            "toy training",
            "determinism and persistence",
            "ablation harness",
            "FLOPs estimator",
        ][n - 1];
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => gradient_suite(),
            2 => residual_identity(),
            3 => dracb_oracle(),
            4 => parameter_accounting(),
            5 => metric_oracles(),
            6 => toy_training(toy.as_ref().expect("toy run")),
            7 => determinism(toy.as_ref().expect("toy run")),
            8 => ablation_harness(),
            _ => flops_estimator(),
        }))
        .unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {n} ({name}): {why}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criterion/criteria failed");
        std::process::exit(1);
    }
}
