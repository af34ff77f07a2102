use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, PatchBatch, TrainingSet};
use crate::error::{Error, Result};
use crate::model::MrenModel;
use crate::tensor::Scalar;

use super::{lr_at, save_checkpoint, train_step, AdamState, Checkpoint, TrainConfig};

/// Patch stream for one epoch. Depends only on the seed and the epoch, so a
/// resumed run draws the same batches as an uninterrupted one.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Wall time since the start of this process's run.
    pub seconds: f64,
}

/// Append-only per-iteration record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Error::Usage(format!(
                    "log iteration {} does not follow {}",
                    row.iteration, last.iteration
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Input(format!("csv: {e}")))?;
        }
        if self.rows.is_empty() {
            w.write_record(["iteration", "epoch", "lr", "loss", "seconds"])
                .map_err(|e| Error::Input(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        let mut log = TrainLog::default();
        for row in r.deserialize() {
            log.push(row.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?)?;
        }
        Ok(log)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?)
            .map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Model, optimizer state and schedule position.
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar = f32> {
    pub model: MrenModel<T>,
    pub adam: AdamState<T>,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub log: TrainLog,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: MrenModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.params);
        Ok(Trainer { model, adam, config, epoch: 0, log: TrainLog::default() })
    }

    /// Continues from a checkpoint. The checkpoint's training config is used
    /// unless `config` is given; a missing optimizer state starts fresh.
    pub fn resume(ckpt: Checkpoint<T>, config: Option<TrainConfig>) -> Result<Self> {
        let config = config
            .or(ckpt.train)
            .ok_or_else(|| Error::Config("checkpoint has no training config".into()))?;
        config.validate()?;
        let adam = ckpt.adam.unwrap_or_else(|| AdamState::new(&ckpt.model.params));
        Ok(Trainer { model: ckpt.model, adam, config, epoch: ckpt.epoch as usize, log: TrainLog::default() })
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            model: self.model.clone(),
            train: Some(self.config.clone()),
            epoch: self.epoch as u64,
            adam: Some(self.adam.clone()),
        }
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Runs the next epoch: sample, augment and step `iterations_per_epoch` times.
    pub fn run_epoch(&mut self, set: &TrainingSet, started: Instant) -> Result<EpochSummary> {
        if set.patch != self.config.patch || set.scale != self.model.config.scale {
            return Err(Error::Config(format!(
                "training set has patch {} at x{}, config wants patch {} at x{}",
                set.patch, set.scale, self.config.patch, self.model.config.scale
            )));
        }
        let epoch = self.epoch;
        let lr = lr_at(epoch, &self.config);
        let mut rng = epoch_rng(self.config.seed, epoch);
        let mut total = 0.0;
        for i in 0..self.config.iterations_per_epoch {
            let mut batch: PatchBatch<T> = set.sample(self.config.batch, &mut rng);
            augment(&mut batch, &mut rng)?;
            let loss = train_step(&mut self.model, &batch, &mut self.adam, lr, &self.config)?;
            total += loss;
            self.log.push(LogRow {
                iteration: epoch * self.config.iterations_per_epoch + i,
                epoch,
                lr,
                loss,
                seconds: started.elapsed().as_secs_f64(),
            })?;
        }
        self.epoch += 1;
        Ok(EpochSummary {
            epoch,
            lr,
            mean_loss: total / self.config.iterations_per_epoch as f64,
            checkpoint: None,
        })
    }

    /// Trains until `config.epochs` epochs are complete. With `out_dir`, each
    /// epoch writes `epoch_NNNN.ckpt`, `last.ckpt` and `train_log.csv`.
    pub fn fit(
        &mut self,
        set: &TrainingSet,
        out_dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochSummary),
    ) -> Result<()> {
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))?;
            if self.log.is_empty() && self.epoch > 0 {
                self.log = previous_log(dir, self.epoch * self.config.iterations_per_epoch);
            }
        }
        let started = Instant::now();
        while !self.is_done() {
            let mut summary = self.run_epoch(set, started)?;
            if let Some(dir) = out_dir {
                let ckpt = self.checkpoint();
                let path = dir.join(format!("epoch_{:04}.ckpt", self.epoch));
                save_checkpoint(&path, &ckpt)?;
                save_checkpoint(dir.join("last.ckpt"), &ckpt)?;
                self.log.write_csv(dir.join("train_log.csv"))?;
                summary.checkpoint = Some(path);
            }
            info!("epoch {} lr {:.3e} loss {:.6}", summary.epoch, summary.lr, summary.mean_loss);
            on_epoch(&summary);
        }
        Ok(())
    }
}

/// Rows of an earlier run's log that precede the resume point.
fn previous_log(dir: &Path, keep_below: usize) -> TrainLog {
    let mut log = TrainLog::default();
    if let Ok(old) = TrainLog::read_csv(dir.join("train_log.csv")) {
        for row in old.rows.into_iter().filter(|r| r.iteration < keep_below) {
            let _ = log.push(row);
        }
    }
    log
}
