//! Network blocks, written once against [`Graph`].

use crate::error::{shape_err, Error, Result};
use crate::graph::Graph;
use crate::ops::{ConvSpec, ResizeKind};

use super::config::{Coordination, Distillation, ModelConfig};

/// Receptive-field kernel of each coordination stage.
pub const STAGE_KERNELS: [usize; 3] = [1, 3, 5];

/// Attention map handed from one distillation block to the next inside a
/// refinement block. Empty at the first distillation of every block.
#[derive(Debug, Clone)]
pub struct AttentionState<V>(pub Option<V>);

impl<V> AttentionState<V> {
    pub fn empty() -> Self {
        AttentionState(None)
    }

    pub fn map(&self) -> Option<&V> {
        self.0.as_ref()
    }
}

fn expect_channels<G: Graph>(g: &G, x: &G::Var, channels: usize, block: &str) -> Result<()> {
    let c = g.dims(x)[1];
    if c != channels {
        return Err(shape_err!("{block}: input channel axis is {c}, expected {channels}"));
    }
    Ok(())
}

/// Squeeze gate with two 1×1 convolutions and a residual around the gated
/// signal: `x + x ⊙ sigmoid(expand(gelu(reduce(avgpool(x)))))`.
pub fn wsilbv<G: Graph>(g: &mut G, name: &str, x: &G::Var, ratio: usize) -> Result<G::Var> {
    let c = g.dims(x)[1];
    if ratio == 0 || c % ratio != 0 {
        return Err(Error::Config(format!(
            "{name}: channel count {c} not divisible by ratio {ratio}"
        )));
    }
    let reduced = c / ratio;
    let pooled = g.global_avg_pool(x)?;
    let r = g.conv(&format!("{name}.reduce"), &pooled, ConvSpec::new(c, reduced, 1))?;
    let r = g.gelu(&r)?;
    let e = g.conv(&format!("{name}.expand"), &r, ConvSpec::new(reduced, c, 1))?;
    let mask = g.sigmoid(&e)?;
    let gated = g.channel_scale(x, &mask)?;
    g.add(x, &gated)
}

/// Multi-kernel stages of one part of the coordination block.
fn part_stage<G: Graph>(
    g: &mut G,
    name: &str,
    x: &G::Var,
    width: usize,
    kernel: usize,
    depthwise: bool,
) -> Result<G::Var> {
    let spec = if depthwise {
        ConvSpec::depthwise(width, kernel)
    } else {
        ConvSpec::new(width, width, kernel)
    };
    let y = g.conv(&format!("{name}.{kernel}"), x, spec)?;
    g.gelu(&y)
}

/// Space-channel adaptive coordination block.
///
/// A 1×1 conv compresses to `branch_channels`; a channel part (ordinary
/// convs) and a spatial part (depthwise convs) then run 1×1, 3×3 and 5×5
/// stages in sequence. After each stage the two parts' outputs are summed
/// and that sum feeds both parts' next stage. Each part concatenates its own
/// stage outputs and fuses them with a 1×1 conv; the fused parts are
/// concatenated, restored to `base_channels` and added to the input.
pub fn scacb<G: Graph>(g: &mut G, name: &str, x: &G::Var, cfg: &ModelConfig) -> Result<G::Var> {
    let base = cfg.base_channels;
    expect_channels(g, x, base, "scacb")?;
    let mode = cfg.variant.coordination();
    let (use_channel, use_spatial) = match mode {
        Coordination::SpatialOnly => (false, true),
        Coordination::ChannelOnly => (true, false),
        _ => (true, true),
    };
    let single_part = !(use_channel && use_spatial);
    let width = if single_part { 2 * cfg.branch_channels } else { cfg.branch_channels };

    let z = g.conv(&format!("{name}.compress"), x, ConvSpec::new(base, width, 1))?;
    let z = g.gelu(&z)?;

    let mut chan_in = z.clone();
    let mut spat_in = z;
    let mut chan_outs = Vec::with_capacity(STAGE_KERNELS.len());
    let mut spat_outs = Vec::with_capacity(STAGE_KERNELS.len());
    for kernel in STAGE_KERNELS {
        let c = use_channel
            .then(|| part_stage(g, &format!("{name}.chan"), &chan_in, width, kernel, false))
            .transpose()?;
        let s = use_spatial
            .then(|| part_stage(g, &format!("{name}.spat"), &spat_in, width, kernel, true))
            .transpose()?;
        match (c, s) {
            (Some(c), Some(s)) => {
                if mode == Coordination::Full {
                    let exchanged = g.add(&c, &s)?;
                    chan_in = exchanged.clone();
                    spat_in = exchanged;
                } else {
                    chan_in = c.clone();
                    spat_in = s.clone();
                }
                chan_outs.push(c);
                spat_outs.push(s);
            }
            (Some(c), None) => {
                chan_in = c.clone();
                chan_outs.push(c);
            }
            (None, Some(s)) => {
                spat_in = s.clone();
                spat_outs.push(s);
            }
            (None, None) => unreachable!("at least one part is active"),
        }
    }

    let stages = STAGE_KERNELS.len();
    let mut fused = Vec::with_capacity(2);
    for (part, outs) in [("chan", chan_outs), ("spat", spat_outs)] {
        if outs.is_empty() {
            continue;
        }
        let cat = g.concat(&outs)?;
        fused.push(g.conv(
            &format!("{name}.{part}_fuse"),
            &cat,
            ConvSpec::new(stages * width, width, 1),
        )?);
    }
    let merged = if fused.len() == 1 { fused.pop().expect("one part") } else { g.concat(&fused)? };
    let restored = g.conv(
        &format!("{name}.restore"),
        &merged,
        ConvSpec::new(2 * cfg.branch_channels, base, 1),
    )?;
    g.add(x, &restored)
}

/// Distillation block with attention-map communication.
///
/// The raw map is a 1×1 distillation `F_l`; with a carried map the fused map
/// is `w_comm · F_prev + F_l`, and the output is the fused map gated by its
/// own sigmoid. The fused map is handed on as the next state.
pub fn dracb<G: Graph>(
    g: &mut G,
    name: &str,
    x: &G::Var,
    prev: &AttentionState<G::Var>,
    cfg: &ModelConfig,
) -> Result<(G::Var, AttentionState<G::Var>)> {
    expect_channels(g, x, cfg.base_channels, "dracb")?;
    let raw = g.conv(
        &format!("{name}.distill"),
        x,
        ConvSpec::new(cfg.base_channels, cfg.distill_channels, 1),
    )?;
    let fuse = |g: &mut G, raw: &G::Var| -> Result<G::Var> {
        match prev.map() {
            Some(p) => {
                if g.dims(p) != g.dims(raw) {
                    return Err(shape_err!(
                        "dracb: carried attention map {:?} does not match {:?}",
                        g.dims(p),
                        g.dims(raw)
                    ));
                }
                g.axpy(cfg.w_comm, p, raw)
            }
            None => Ok(raw.clone()),
        }
    };
    match cfg.variant.distillation() {
        Distillation::Full => {
            let fused = fuse(g, &raw)?;
            let gate = g.sigmoid(&fused)?;
            let out = g.mul(&fused, &gate)?;
            Ok((out, AttentionState(Some(fused))))
        }
        Distillation::Plain => Ok((raw, AttentionState::empty())),
        Distillation::SelfGate => {
            let gate = g.sigmoid(&raw)?;
            let out = g.mul(&raw, &gate)?;
            Ok((out, AttentionState::empty()))
        }
        Distillation::CarryNoGate => {
            let fused = fuse(g, &raw)?;
            Ok((fused.clone(), AttentionState(Some(fused))))
        }
    }
}

/// Multilevel refinement enhancement block.
///
/// Alternates distillation and coordination for `refine_stages` stages, then
/// distils the last refined features; the distilled slices are concatenated,
/// aggregated by a 1×1 conv, passed through the squeeze gate and added to
/// the block input.
pub fn mreb<G: Graph>(g: &mut G, name: &str, x: &G::Var, cfg: &ModelConfig) -> Result<G::Var> {
    expect_channels(g, x, cfg.base_channels, "mreb")?;
    let mut state = AttentionState::empty();
    let mut refined = x.clone();
    let mut distilled = Vec::with_capacity(cfg.refine_stages + 1);
    for i in 0..cfg.refine_stages {
        let (d, next) = dracb(g, &format!("{name}.dracb.{i}"), &refined, &state, cfg)?;
        distilled.push(d);
        state = next;
        refined = scacb(g, &format!("{name}.scacb.{i}"), &refined, cfg)?;
    }
    let (d, _) = dracb(g, &format!("{name}.dracb.{}", cfg.refine_stages), &refined, &state, cfg)?;
    distilled.push(d);
    let cat = g.concat(&distilled)?;
    let agg = g.conv(
        &format!("{name}.aggregate"),
        &cat,
        ConvSpec::new(distilled.len() * cfg.distill_channels, cfg.base_channels, 1),
    )?;
    let attended = wsilbv(g, &format!("{name}.attn"), &agg, cfg.wsilbv_ratio)?;
    g.add(x, &attended)
}

/// Reconstruction block: bilinear upsampling, 3×3 conv + GELU, squeeze gate,
/// 1×1 channel conv.
pub fn rbwa<G: Graph>(
    g: &mut G,
    name: &str,
    x: &G::Var,
    cfg: &ModelConfig,
    stage_scale: usize,
) -> Result<G::Var> {
    expect_channels(g, x, cfg.base_channels, "rbwa")?;
    let c = cfg.base_channels;
    let up = g.resize(ResizeKind::Bilinear, x, stage_scale)?;
    let y = g.conv(&format!("{name}.conv"), &up, ConvSpec::new(c, c, 3))?;
    let y = g.gelu(&y)?;
    let y = wsilbv(g, &format!("{name}.attn"), &y, cfg.wsilbv_ratio)?;
    g.conv(&format!("{name}.compress"), &y, ConvSpec::new(c, c, 1))
}

/// Head: 3×3 conv from RGB to the feature width.
pub fn head<G: Graph>(g: &mut G, x: &G::Var, cfg: &ModelConfig) -> Result<G::Var> {
    expect_channels(g, x, 3, "network input")?;
    g.conv("head", x, ConvSpec::new(3, cfg.base_channels, 3))
}

/// Tail: 3×3 conv from features back to RGB.
pub fn tail<G: Graph>(g: &mut G, x: &G::Var, cfg: &ModelConfig) -> Result<G::Var> {
    g.conv("tail", x, ConvSpec::new(cfg.base_channels, 3, 3))
}

/// Full network: shallow features, chained refinement blocks, long skip,
/// reconstruction blocks, RGB projection plus bicubic upsampling of the input.
pub fn mren_forward<G: Graph>(g: &mut G, input: &G::Var, cfg: &ModelConfig) -> Result<G::Var> {
    let shallow = head(g, input, cfg)?;
    let mut deep = shallow.clone();
    for i in 0..cfg.n_mreb {
        deep = mreb(g, &format!("mreb.{i}"), &deep, cfg)?;
    }
    let mut feat = g.add(&deep, &shallow)?;
    for (j, stage) in cfg.rbwa_scales().into_iter().enumerate() {
        feat = rbwa(g, &format!("rbwa.{j}"), &feat, cfg, stage)?;
    }
    let residual = tail(g, &feat, cfg)?;
    let upsampled = g.resize(ResizeKind::Bicubic, input, cfg.scale)?;
    g.add(&residual, &upsampled)
}
