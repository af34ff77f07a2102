use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture variant used by the ablation studies.
///
/// `Osa`, `Oca` and `Scnc` change the coordination block; the three
/// `Distill*` variants change the distillation/attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Spatial (depthwise) part only.
    Osa,
    /// Channel (ordinary conv) part only.
    Oca,
    /// Both parts, no cross-part exchange.
    Scnc,
    /// Plain 1×1 distillation.
    DistillOnly,
    /// Distillation gated by its own sigmoid.
    DistillSigmoid,
    /// Distillation with attention-map carry, no sigmoid gate.
    DistillSkip,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::Osa,
        Variant::Oca,
        Variant::Scnc,
        Variant::DistillOnly,
        Variant::DistillSigmoid,
        Variant::DistillSkip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Osa => "osa",
            Variant::Oca => "oca",
            Variant::Scnc => "scnc",
            Variant::DistillOnly => "distill_only",
            Variant::DistillSigmoid => "distill_sigmoid",
            Variant::DistillSkip => "distill_skip",
        }
    }

    /// Whether the coordination block keeps both parts and their exchange.
    pub fn coordination(self) -> Coordination {
        match self {
            Variant::Osa => Coordination::SpatialOnly,
            Variant::Oca => Coordination::ChannelOnly,
            Variant::Scnc => Coordination::NoExchange,
            _ => Coordination::Full,
        }
    }

    pub fn distillation(self) -> Distillation {
        match self {
            Variant::DistillOnly => Distillation::Plain,
            Variant::DistillSigmoid => Distillation::SelfGate,
            Variant::DistillSkip => Distillation::CarryNoGate,
            _ => Distillation::Full,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordination {
    Full,
    SpatialOnly,
    ChannelOnly,
    NoExchange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distillation {
    /// Carry plus self-gating.
    Full,
    Plain,
    SelfGate,
    CarryNoGate,
}

fn default_scale() -> usize {
    4
}
fn default_n_mreb() -> usize {
    6
}
fn default_base_channels() -> usize {
    60
}
fn default_branch_channels() -> usize {
    10
}
fn default_distill_channels() -> usize {
    20
}
fn default_w_comm() -> f64 {
    0.2
}
fn default_wsilbv_ratio() -> usize {
    4
}
fn default_refine_stages() -> usize {
    3
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_scale")]
    pub scale: usize,
    #[serde(default = "default_n_mreb")]
    pub n_mreb: usize,
    #[serde(default = "default_base_channels")]
    pub base_channels: usize,
    #[serde(default = "default_branch_channels")]
    pub branch_channels: usize,
    #[serde(default = "default_distill_channels")]
    pub distill_channels: usize,
    /// Weight of the previous attention map in the carried fusion.
    #[serde(default = "default_w_comm")]
    pub w_comm: f64,
    #[serde(default = "default_wsilbv_ratio")]
    pub wsilbv_ratio: usize,
    /// Coordination blocks per refinement block.
    #[serde(default = "default_refine_stages")]
    pub refine_stages: usize,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scale: default_scale(),
            n_mreb: default_n_mreb(),
            base_channels: default_base_channels(),
            branch_channels: default_branch_channels(),
            distill_channels: default_distill_channels(),
            w_comm: default_w_comm(),
            wsilbv_ratio: default_wsilbv_ratio(),
            refine_stages: default_refine_stages(),
            variant: Variant::Full,
            rng_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_scale(scale: usize) -> Self {
        ModelConfig { scale, ..Self::default() }
    }

    /// Upsampling stage factors: ×2 and ×3 use one stage, ×4 two ×2 stages.
    pub fn rbwa_scales(&self) -> Vec<usize> {
        match self.scale {
            4 => vec![2, 2],
            s => vec![s],
        }
    }

    pub fn n_rbwa(&self) -> usize {
        self.rbwa_scales().len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !matches!(self.scale, 2..=4) {
            return bad(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.n_mreb == 0 {
            return bad("n_mreb must be positive".into());
        }
        if self.refine_stages == 0 {
            return bad("refine_stages must be positive".into());
        }
        if self.branch_channels == 0 || self.branch_channels >= self.base_channels {
            return bad(format!(
                "branch_channels {} must be in 1..{}",
                self.branch_channels, self.base_channels
            ));
        }
        if self.distill_channels == 0 || self.distill_channels >= self.base_channels {
            return bad(format!(
                "distill_channels {} must be in 1..{}",
                self.distill_channels, self.base_channels
            ));
        }
        if !self.w_comm.is_finite() {
            return bad("w_comm must be finite".into());
        }
        if self.wsilbv_ratio == 0 || !self.base_channels.is_multiple_of(self.wsilbv_ratio) {
            return bad(format!(
                "base_channels {} not divisible by wsilbv_ratio {}",
                self.base_channels, self.wsilbv_ratio
            ));
        }
        Ok(())
    }
}
