use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mren_core::analysis::{
    build_variant, count_params, count_params_for_config, estimate_flops, format_count,
    format_giga, percent_delta, reference, Axis, Cell, FlopsReport, ParamReport, Table,
    VariantSpec,
};
use mren_core::data::{load_png, save_png, TrainingSet};
use mren_core::train::{
    evaluate_dir, load_checkpoint, Checkpoint, EvalReport, TrainConfig, Trainer, Upscaler,
};
use mren_core::{init_model, Error, ModelConfig, MrenModel, Result, Variant};

use crate::config::ConfigFile;
use crate::{AblateArgs, AnalyzeArgs, EvalArgs, InferArgs, TrainArgs};

fn emit(out: &mut dyn Write, text: impl AsRef<str>) -> Result<()> {
    out.write_all(text.as_ref().as_bytes())
        .map_err(|e| Error::Io { context: "cannot write output".into(), source: e })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io { context: format!("cannot write {}", path.display()), source: e })
}

fn data_dir(flag: Option<&PathBuf>, file: &ConfigFile) -> Result<PathBuf> {
    flag.or(file.data.hr_dir.as_ref())
        .cloned()
        .ok_or_else(|| Error::Config("no data directory: pass --data-dir or set data.hr_dir".into()))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub log_rows: usize,
    pub last_checkpoint: PathBuf,
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<TrainOutcome> {
    let file = ConfigFile::load_or_default(a.config.as_deref())?;
    let dir = data_dir(a.data_dir.as_ref(), &file)?;

    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt: Checkpoint<f32> = load_checkpoint(path)?;
            if let Some(s) = a.scale {
                if s != ckpt.model.config.scale {
                    return Err(Error::Config(format!(
                        "--scale {s} conflicts with checkpoint scale {}",
                        ckpt.model.config.scale
                    )));
                }
            }
            let mut tc = ckpt.train.clone().unwrap_or_else(|| file.train.clone());
            if let Some(e) = a.epochs {
                tc.epochs = e;
            }
            Trainer::resume(ckpt, Some(tc))?
        }
        None => {
            let mut mc = file.model.clone();
            let mut tc = file.train.clone();
            if let Some(s) = a.scale {
                mc.scale = s;
            }
            if let Some(seed) = a.seed {
                mc.rng_seed = seed;
                tc.seed = seed;
            }
            apply_train_overrides(a, &mut tc);
            mc.validate()?;
            Trainer::new(init_model(&mc, mc.rng_seed)?, tc)?
        }
    };
    let start_epoch = trainer.epoch;
    let set = TrainingSet::from_dir(&dir, trainer.model.config.scale, trainer.config.patch, file.data.cache_lr)?;
    emit(
        out,
        format!(
            "training x{} on {} images from {}, {} epochs x {} iterations\n",
            trainer.model.config.scale,
            set.len(),
            dir.display(),
            trainer.config.epochs,
            trainer.config.iterations_per_epoch
        ),
    )?;
    let total = trainer.config.epochs;
    trainer.fit(&set, Some(&a.out), |s| {
        let _ = emit(out, format!("epoch {}/{} lr {:.3e} loss {:.6}\n", s.epoch + 1, total, s.lr, s.mean_loss));
    })?;
    Ok(TrainOutcome {
        epochs_run: trainer.epoch - start_epoch,
        log_rows: trainer.log.len(),
        last_checkpoint: a.out.join("last.ckpt"),
    })
}

fn apply_train_overrides(a: &TrainArgs, tc: &mut TrainConfig) {
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.iterations {
        tc.iterations_per_epoch = v;
    }
    if let Some(v) = a.batch {
        tc.batch = v;
    }
    if let Some(v) = a.patch {
        tc.patch = v;
    }
    if let Some(v) = a.lr {
        tc.lr0 = v;
    }
}

pub fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> Result<(usize, usize)> {
    let ckpt: Checkpoint<f32> = load_checkpoint(&a.model)?;
    let img = load_png(&a.input)?;
    let scale = ckpt.model.config.scale;
    let sr = Upscaler::Network(&ckpt.model).upscale(&img, scale)?;
    save_png(&sr, &a.output)?;
    emit(out, format!("wrote {}x{} (x{scale}) to {}\n", sr.width(), sr.height(), a.output.display()))?;
    Ok((sr.width(), sr.height()))
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport> {
    let report = if a.model == "bicubic" {
        evaluate_dir(&Upscaler::<f32>::Bicubic, &a.hr_dir, a.scale)?
    } else {
        let ckpt: Checkpoint<f32> = load_checkpoint(&a.model)?;
        evaluate_dir(&Upscaler::Network(&ckpt.model), &a.hr_dir, ckpt.model.config.scale)?
    };
    let table = report.to_table();
    emit(out, format!("x{} {}\n", report.scale, a.model))?;
    emit(out, table.to_text())?;
    if let Some(path) = &a.csv {
        write_file(path, &table.to_csv()?)?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub params: ParamReport,
    /// (n_mreb, total) for 3..=8.
    pub mreb_sweep: Vec<(usize, usize)>,
    pub coordination: Vec<(Variant, usize)>,
    pub distillation: Vec<(Variant, usize)>,
    pub flops: FlopsReport,
    pub flops_mac2_total: u64,
}

fn delta_line(what: &str, value: usize, reference: usize) -> String {
    format!(
        "{what}: {value} ({}), reference {} ({:+.1}%)\n",
        format_count(value),
        format_count(reference),
        percent_delta(value as f64, reference as f64)
    )
}

fn axis_totals(base: &ModelConfig, axis: Axis) -> Result<Vec<(VariantSpec, usize)>> {
    axis.all_values()
        .into_iter()
        .map(|spec| Ok((spec, count_params_for_config(&build_variant(base, spec)?)?.total)))
        .collect()
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<AnalyzeOutcome> {
    let file = ConfigFile::load_or_default(a.config.as_deref())?;
    let mut cfg = file.model;
    if let Some(s) = a.scale {
        cfg.scale = s;
    }
    cfg.validate()?;
    let model: MrenModel<f32> = init_model(&cfg, cfg.rng_seed)?;
    let params = count_params(&model);
    let per_mreb = params.per_mreb().unwrap_or(0);

    emit(
        out,
        format!("parameters: x{}, {} MREB, variant {}\n", cfg.scale, cfg.n_mreb, cfg.variant),
    )?;
    let table = params.to_table();
    emit(out, table.to_text())?;
    if let Some(path) = &a.csv {
        write_file(path, &table.to_csv()?)?;
    }
    emit(out, delta_line("per-MREB subtotal", per_mreb, reference::PARAMS_PER_MREB))?;
    emit(out, delta_line("total", params.total, reference::TOTAL_PARAMS_X4))?;

    let mreb: Vec<(usize, usize)> = axis_totals(&cfg, Axis::Mreb)?
        .into_iter()
        .map(|(spec, n)| match spec {
            VariantSpec::NMreb(k) => (k, n),
            _ => unreachable!("mreb axis yields block counts"),
        })
        .collect();
    let mut t = Table::new(["n_mreb", "parameters", "increment", "reference"]);
    for (i, &(k, n)) in mreb.iter().enumerate() {
        let inc = if i == 0 { String::from("-") } else { (n - mreb[i - 1].1).to_string() };
        let refv = reference::PARAMS_BY_MREB.iter().find(|r| r.0 == k).map(|r| r.1).unwrap_or(0);
        t.push([Cell::Int(k as u64), Cell::Int(n as u64), Cell::Text(inc), Cell::Text(format_count(refv))]);
    }
    emit(out, "\nrefinement-block sweep\n")?;
    emit(out, t.to_text())?;

    let variants = |axis| -> Result<Vec<(Variant, usize)>> {
        Ok(axis_totals(&cfg, axis)?
            .into_iter()
            .map(|(spec, n)| match spec {
                VariantSpec::Scacb(v) | VariantSpec::Dracb(v) => (v, n),
                _ => unreachable!("variant axes yield variants"),
            })
            .collect())
    };
    let coordination = variants(Axis::Scacb)?;
    let distillation = variants(Axis::Dracb)?;
    let mut t = Table::new(["coordination", "parameters", "reference"]);
    for (v, n) in &coordination {
        let refv = reference::PARAMS_BY_COORDINATION.iter().find(|r| r.0 == v.as_str()).map(|r| r.1).unwrap_or(0);
        t.push([Cell::Text(v.to_string()), Cell::Int(*n as u64), Cell::Text(format_count(refv))]);
    }
    emit(out, "\ncoordination variants\n")?;
    emit(out, t.to_text())?;
    let mut t = Table::new(["distillation", "parameters"]);
    for (v, n) in &distillation {
        t.push([Cell::Text(v.to_string()), Cell::Int(*n as u64)]);
    }
    emit(out, "\ndistillation variants\n")?;
    emit(out, t.to_text())?;

    let flops = estimate_flops(&cfg, a.resolution, a.convention)?;
    let mac2 = estimate_flops(&cfg, a.resolution, mren_core::analysis::FlopConvention::Mac2)?;
    emit(out, format!("\nFLOPs: {}\n", flops.assumptions()))?;
    let mut t = Table::new(["block", "ops"]);
    for (block, n) in flops.per_block() {
        t.push([Cell::Text(block), Cell::Int(n * a.convention.factor())]);
    }
    emit(out, t.to_text())?;
    emit(
        out,
        format!(
            "conv MACs {} ({}), total {} ops ({})\n",
            flops.total_macs(),
            format_giga(flops.total_macs() as f64),
            flops.total(),
            format_giga(flops.total() as f64)
        ),
    )?;
    emit(
        out,
        format!(
            "comparison: estimate {} at x{} vs reference {} (x2 at 1280x720 output, counting convention unknown); informational only\n",
            format_giga(flops.total() as f64),
            cfg.scale,
            format_giga(reference::FLOPS_X2_720P)
        ),
    )?;
    Ok(AnalyzeOutcome {
        params,
        mreb_sweep: mreb,
        coordination,
        distillation,
        flops,
        flops_mac2_total: mac2.total(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: String,
    pub params: usize,
    /// Mean loss over the last min(50, budget) iterations.
    pub final_loss: f64,
    pub losses: Vec<f64>,
}

pub fn cmd_ablate(a: &AblateArgs, out: &mut dyn Write) -> Result<Vec<AblationRow>> {
    let axis: Axis = a.axis.parse()?;
    let specs = match &a.values {
        Some(list) => list
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| axis.parse_value(v))
            .collect::<Result<Vec<_>>>()?,
        None => axis.all_values(),
    };
    if specs.is_empty() {
        return Err(Error::Config("no ablation values given".into()));
    }
    if a.budget_iters == 0 {
        return Err(Error::Config("--budget-iters must be at least 1".into()));
    }
    let file = ConfigFile::load_or_default(a.config.as_deref())?;
    let mut base = file.model.clone();
    if let Some(s) = a.scale {
        base.scale = s;
    }
    base.validate()?;
    let dir = data_dir(a.data_dir.as_ref(), &file)?;
    let set = TrainingSet::from_dir(&dir, base.scale, a.patch, file.data.cache_lr)?;
    let tc = TrainConfig {
        epochs: 1,
        iterations_per_epoch: a.budget_iters,
        batch: a.batch,
        patch: a.patch,
        seed: a.seed,
        ..file.train.clone()
    };

    let mut rows = Vec::new();
    for spec in specs {
        let cfg = build_variant(&base, spec)?;
        let mut trainer = Trainer::new(init_model::<f32>(&cfg, a.seed)?, tc.clone())?;
        trainer.run_epoch(&set, Instant::now())?;
        if !trainer.model.params.iter().all(|(_, p)| p.value.all_finite()) {
            return Err(Error::NonFinite(format!("parameters of variant {} diverged", spec.label())));
        }
        let losses = trainer.log.losses();
        let window = losses.len().min(50);
        let final_loss = losses[losses.len() - window..].iter().sum::<f64>() / window as f64;
        rows.push(AblationRow {
            value: spec.label(),
            params: trainer.model.params.num_elements(),
            final_loss,
            losses,
        });
    }

    let mut t = Table::new([a.axis.as_str(), "parameters", "params_k", "final_loss"]);
    for r in &rows {
        t.push([
            Cell::Text(r.value.clone()),
            Cell::Int(r.params as u64),
            Cell::Text(format_count(r.params)),
            Cell::Float { value: r.final_loss, decimals: 6 },
        ]);
    }
    emit(out, format!("ablation over {} ({} iterations each, x{})\n", a.axis, a.budget_iters, base.scale))?;
    emit(out, t.to_text())?;
    if let Some(path) = &a.csv {
        write_file(path, &t.to_csv()?)?;
    }
    Ok(rows)
}
