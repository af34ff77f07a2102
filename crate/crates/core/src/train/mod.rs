//! L1 training with Adam and a step-decay schedule, checkpoints and evaluation.

mod adam;
mod checkpoint;
mod eval;
mod fit;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, train_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use eval::{evaluate, evaluate_dir, EvalReport, EvalRow, Upscaler};
pub use fit::{epoch_rng, EpochSummary, LogRow, TrainLog, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Epochs between learning-rate decays.
    pub decay_period: usize,
    pub decay_factor: f64,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch: usize,
    /// HR patch side.
    pub patch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 5e-4,
            decay_period: 600,
            decay_factor: 0.5,
            epochs: 20,
            iterations_per_epoch: 50,
            batch: 16,
            patch: 192,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.decay_period == 0 {
            return bad("decay_period must be at least 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must be in (0, 1]");
        }
        if self.batch == 0 || self.iterations_per_epoch == 0 || self.patch == 0 {
            return bad("batch, iterations_per_epoch and patch must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must be in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("eps must be positive");
        }
        Ok(())
    }
}

/// `lr0 · decay_factor^⌊epoch / decay_period⌋`
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    config.lr0 * config.decay_factor.powi((epoch / config.decay_period) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 5e-4);
        assert_eq!(lr_at(599, &c), 5e-4);
        assert_eq!(lr_at(600, &c), 2.5e-4);
        assert_eq!(lr_at(1200, &c), 1.25e-4);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch, 16);
    }
}
