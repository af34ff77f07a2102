//! Parameter and operation accounting, ablation configurations and table output.

mod table;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ShapeTrace, TracedOp};
use crate::model::{conv_layers, mren_forward, ModelConfig, MrenModel, Variant};
use crate::tensor::Scalar;

pub use table::{Cell, Table};

/// Published totals used as comparison points in reports.
pub mod reference {
    /// Default ×4 model parameter total.
    pub const TOTAL_PARAMS_X4: usize = 298_000;
    /// Parameter increment per additional refinement block.
    pub const PARAMS_PER_MREB: usize = 34_000;
    /// Totals for 3..=8 refinement blocks.
    pub const PARAMS_BY_MREB: [(usize, usize); 6] =
        [(3, 196_000), (4, 230_000), (5, 264_000), (6, 298_000), (7, 332_000), (8, 366_000)];
    /// Coordination-block ablation totals.
    pub const PARAMS_BY_COORDINATION: [(&str, usize); 4] =
        [("osa", 245_000), ("oca", 375_000), ("scnc", 298_000), ("full", 298_000)];
    /// ×2 operation count at 1280×720 output.
    pub const FLOPS_X2_720P: f64 = 23.8e9;
}

/// Exact learned-element counts by parameter, rolled up by block.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub per_param: IndexMap<String, usize>,
    /// Top-level blocks such as `head`, `mreb.0`, `rbwa.1`, `tail`.
    pub per_block: IndexMap<String, usize>,
    pub total: usize,
}

impl ParamReport {
    fn from_counts(counts: impl IntoIterator<Item = (String, usize)>) -> Self {
        let mut per_param = IndexMap::new();
        let mut per_block: IndexMap<String, usize> = IndexMap::new();
        for (name, n) in counts {
            *per_block.entry(block_of(&name)).or_default() += n;
            per_param.insert(name, n);
        }
        let total = per_param.values().sum();
        ParamReport { per_param, per_block, total }
    }

    /// Subtotal of the first refinement block, if any.
    pub fn per_mreb(&self) -> Option<usize> {
        self.per_block.get("mreb.0").copied()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["block", "parameters"]);
        for (block, n) in &self.per_block {
            t.push([Cell::Text(block.clone()), Cell::Int(*n as u64)]);
        }
        t.push([Cell::Text("total".into()), Cell::Int(self.total as u64)]);
        t
    }
}

fn block_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        [b, i, ..] if i.parse::<usize>().is_ok() => format!("{b}.{i}"),
        [b, ..] => b.to_string(),
        [] => String::new(),
    }
}

pub fn count_params<T: Scalar>(model: &MrenModel<T>) -> ParamReport {
    ParamReport::from_counts(model.params.iter().map(|(n, p)| (n.to_string(), p.value.len())))
}

/// Parameter report computed from the configuration alone.
pub fn count_params_for_config(config: &ModelConfig) -> Result<ParamReport> {
    let mut counts = Vec::new();
    for (name, spec) in conv_layers(config)? {
        counts.push((format!("{name}.weight"), spec.weight_dims().iter().product()));
        if spec.bias {
            counts.push((format!("{name}.bias"), spec.out_channels));
        }
    }
    Ok(ParamReport::from_counts(counts))
}

/// Whether one multiply-accumulate counts as one or two operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopConvention {
    Mac,
    Mac2,
}

impl FlopConvention {
    pub fn factor(self) -> u64 {
        match self {
            FlopConvention::Mac => 1,
            FlopConvention::Mac2 => 2,
        }
    }
}

impl FromStr for FlopConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mac" => Ok(FlopConvention::Mac),
            "mac2" | "mac×2" | "macx2" => Ok(FlopConvention::Mac2),
            _ => Err(Error::Config(format!("unknown FLOPs convention {s:?}"))),
        }
    }
}

impl fmt::Display for FlopConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlopConvention::Mac => "mac",
            FlopConvention::Mac2 => "mac2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub name: String,
    /// Output dims of the operation.
    pub output_dims: [usize; 4],
    /// Multiply-accumulates (convolution weights only).
    pub macs: u64,
    /// Bias additions, element-wise work and resampling, one per element.
    pub other_ops: u64,
}

impl LayerCost {
    pub fn total(&self) -> u64 {
        self.macs + self.other_ops
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    /// Output image (width, height).
    pub resolution: (usize, usize),
    pub convention: FlopConvention,
    pub layers: Vec<LayerCost>,
}

impl FlopsReport {
    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    /// Every counted operation under the chosen convention.
    pub fn total(&self) -> u64 {
        self.layers.iter().map(LayerCost::total).sum::<u64>() * self.convention.factor()
    }

    /// Conv MACs rolled up by top-level block; every other operation is
    /// collected under `elementwise`.
    pub fn per_block(&self) -> IndexMap<String, u64> {
        let mut out: IndexMap<String, u64> = IndexMap::new();
        for l in &self.layers {
            if l.macs > 0 {
                *out.entry(block_of(&l.name)).or_default() += l.macs;
            }
            *out.entry("elementwise".into()).or_default() += l.other_ops;
        }
        if let Some(e) = out.shift_remove("elementwise") {
            out.insert("elementwise".into(), e);
        }
        out
    }

    pub fn assumptions(&self) -> String {
        format!(
            "output {}x{}, batch 1, convention {} (1 MAC = {} op), conv MACs at each layer's true resolution, \
             bias/element-wise/resampling counted at 1 op per output element",
            self.resolution.0,
            self.resolution.1,
            self.convention,
            self.convention.factor()
        )
    }
}

/// Costs every operation recorded in a shape trace.
pub fn costs_of_trace(trace: &ShapeTrace) -> Vec<LayerCost> {
    trace
        .entries
        .iter()
        .map(|e| {
            let out: u64 = e.output_dims.iter().map(|&d| d as u64).product();
            let sites = (e.output_dims[0] * e.output_dims[2] * e.output_dims[3]) as u64;
            match &e.op {
                TracedOp::Conv { name, spec } => {
                    let per_site = spec.out_channels as u64
                        * (spec.in_channels / spec.groups) as u64
                        * (spec.kernel.0 * spec.kernel.1) as u64;
                    LayerCost {
                        name: name.clone(),
                        output_dims: e.output_dims,
                        macs: per_site * sites,
                        other_ops: if spec.bias { out } else { 0 },
                    }
                }
                op => LayerCost {
                    name: op.label(),
                    output_dims: e.output_dims,
                    macs: 0,
                    other_ops: out,
                },
            }
        })
        .collect()
}

/// Operation count for one image producing `resolution = (width, height)`.
pub fn estimate_flops(
    config: &ModelConfig,
    resolution: (usize, usize),
    convention: FlopConvention,
) -> Result<FlopsReport> {
    config.validate()?;
    let (w, h) = resolution;
    if w == 0 || h == 0 || w % config.scale != 0 || h % config.scale != 0 {
        return Err(Error::Input(format!(
            "output resolution {w}x{h} not divisible by scale {}",
            config.scale
        )));
    }
    let mut trace = ShapeTrace::new();
    mren_forward(&mut trace, &[1, 3, h / config.scale, w / config.scale], config)?;
    Ok(FlopsReport { resolution, convention, layers: costs_of_trace(&trace) })
}

/// One axis of the ablation studies and a value on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariantSpec {
    NMreb(usize),
    WComm(f64),
    Scacb(Variant),
    Dracb(Variant),
}

/// Named ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Mreb,
    W,
    Scacb,
    Dracb,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mreb" => Ok(Axis::Mreb),
            "w" => Ok(Axis::W),
            "scacb" => Ok(Axis::Scacb),
            "dracb" => Ok(Axis::Dracb),
            _ => Err(Error::Config(format!("unknown axis {s:?}; expected mreb, w, scacb or dracb"))),
        }
    }
}

impl Axis {
    pub fn parse_value(self, s: &str) -> Result<VariantSpec> {
        let s = s.trim();
        let spec = match self {
            Axis::Mreb => VariantSpec::NMreb(
                s.parse().map_err(|_| Error::Config(format!("invalid block count {s:?}")))?,
            ),
            Axis::W => VariantSpec::WComm(
                s.parse().map_err(|_| Error::Config(format!("invalid weight {s:?}")))?,
            ),
            Axis::Scacb => VariantSpec::Scacb(s.parse()?),
            Axis::Dracb => VariantSpec::Dracb(s.parse()?),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every value studied on this axis.
    pub fn all_values(self) -> Vec<VariantSpec> {
        match self {
            Axis::Mreb => (3..=8).map(VariantSpec::NMreb).collect(),
            Axis::W => (0..=10).map(|i| VariantSpec::WComm(i as f64 / 10.0)).collect(),
            Axis::Scacb => [Variant::Osa, Variant::Oca, Variant::Scnc, Variant::Full]
                .into_iter()
                .map(VariantSpec::Scacb)
                .collect(),
            Axis::Dracb => [
                Variant::DistillOnly,
                Variant::DistillSigmoid,
                Variant::DistillSkip,
                Variant::Full,
            ]
            .into_iter()
            .map(VariantSpec::Dracb)
            .collect(),
        }
    }
}

impl VariantSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            VariantSpec::NMreb(n) if !(3..=8).contains(&n) => bad(format!("n_mreb {n} outside 3..=8")),
            VariantSpec::WComm(w) if !(0.0..=1.0).contains(&w) => bad(format!("w_comm {w} outside [0, 1]")),
            VariantSpec::Scacb(v)
                if !matches!(v, Variant::Osa | Variant::Oca | Variant::Scnc | Variant::Full) =>
            {
                bad(format!("{v} is not a coordination variant"))
            }
            VariantSpec::Dracb(v)
                if !matches!(
                    v,
                    Variant::DistillOnly | Variant::DistillSigmoid | Variant::DistillSkip | Variant::Full
                ) =>
            {
                bad(format!("{v} is not a distillation variant"))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            VariantSpec::NMreb(n) => n.to_string(),
            VariantSpec::WComm(w) => format!("{w:.1}"),
            VariantSpec::Scacb(v) | VariantSpec::Dracb(v) => v.to_string(),
        }
    }
}

/// `base` with exactly one axis replaced.
pub fn build_variant(base: &ModelConfig, spec: VariantSpec) -> Result<ModelConfig> {
    spec.validate()?;
    let mut cfg = base.clone();
    match spec {
        VariantSpec::NMreb(n) => cfg.n_mreb = n,
        VariantSpec::WComm(w) => cfg.w_comm = w,
        VariantSpec::Scacb(v) | VariantSpec::Dracb(v) => cfg.variant = v,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Count in thousands with one decimal, e.g. `264.2K`.
pub fn format_count(n: usize) -> String {
    format!("{:.1}K", n as f64 / 1e3)
}

/// Operation count in billions with one decimal, e.g. `23.8G`.
pub fn format_giga(n: f64) -> String {
    format!("{:.1}G", n / 1e9)
}

/// Signed relative deviation in percent.
pub fn percent_delta(value: f64, reference: f64) -> f64 {
    (value - reference) / reference * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::ConvSpec;
    use crate::graph::Graph;

    #[test]
    fn block_rollup() {
        assert_eq!(block_of("mreb.3.scacb.1.compress.weight"), "mreb.3");
        assert_eq!(block_of("head.weight"), "head");
        assert_eq!(block_of("rbwa.1.conv.bias"), "rbwa.1");
    }

    #[test]
    fn single_conv_macs_closed_form() {
        let mut trace = ShapeTrace::new();
        trace.conv("c", &[1, 60, 64, 64], ConvSpec::new(60, 60, 3).without_bias()).unwrap();
        let costs = costs_of_trace(&trace);
        assert_eq!(costs[0].macs, 60 * 60 * 9 * 64 * 64);
        assert_eq!(costs[0].total(), 132_710_400);

        let mut trace = ShapeTrace::new();
        trace.conv("c", &[1, 60, 64, 64], ConvSpec::new(60, 60, 3)).unwrap();
        let costs = costs_of_trace(&trace);
        assert_eq!(costs[0].macs, 132_710_400);
        assert_eq!(costs[0].other_ops, 60 * 64 * 64);
    }

    #[test]
    fn report_totals_sum_leaves() {
        let report = count_params_for_config(&ModelConfig::default()).unwrap();
        assert_eq!(report.total, report.per_param.values().sum::<usize>());
        assert_eq!(report.total, report.per_block.values().sum::<usize>());
    }

    #[test]
    fn variant_domains() {
        let base = ModelConfig::default();
        assert!(build_variant(&base, VariantSpec::NMreb(2)).is_err());
        assert!(build_variant(&base, VariantSpec::WComm(1.5)).is_err());
        assert!(build_variant(&base, VariantSpec::Scacb(Variant::DistillOnly)).is_err());
        assert!(build_variant(&base, VariantSpec::Dracb(Variant::Osa)).is_err());
        let cfg = build_variant(&base, VariantSpec::WComm(0.0)).unwrap();
        assert_eq!(ModelConfig { w_comm: 0.2, ..cfg }, base);
        assert_eq!(Axis::W.all_values().len(), 11);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_count(264_183), "264.2K");
        assert_eq!(format_giga(23.8e9), "23.8G");
    }
}
