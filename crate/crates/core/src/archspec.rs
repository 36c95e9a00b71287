//! Static shape propagation and parameter counting for the generator and
//! discriminator block definitions. Nothing here allocates weights.

use serde::Serialize;

use crate::error::{Error, Result};

pub const ENCODER_FILTERS: [usize; 7] = [64, 128, 128, 128, 256, 256, 512];
pub const DECODER_FILTERS: [usize; 7] = [512, 256, 256, 128, 128, 128, 64];
pub const DISCRIMINATOR_FILTERS: [usize; 7] = [64, 128, 256, 256, 256, 256, 256];
pub const CONV_BLOCK_GROWTH: usize = 16;
pub const CONV_BLOCK_REPEATS: usize = 5;
pub const LATENT_FILTERS: usize = 64;
/// Stage count given in the prose architecture summary.
pub const SUMMARY_STAGE_COUNT: usize = 5;
pub const CHANNEL_LINT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    /// `repeats` x (BN, LeakyReLU, 3x3 conv to `filters`, concat with running shortcut).
    ConvBlock,
    /// 3x3 conv then 2x average pool.
    Downsample,
    /// 2x nearest upsample then 3x3 conv.
    Upsample,
    /// Pooled 3x3 shortcut plus `repeats` x (BN, LeakyReLU, 3x3 conv), pooled, added.
    DiscResidual,
    Conv1x1,
    /// 3x3 conv to the output channels.
    FinalConv,
    /// Side output: 1x1 conv then global average pooling. Does not feed later blocks.
    ClassifierHead,
    /// Saves the current tensor for a later `SkipConcat`.
    SkipPush,
    /// Concatenates the most recently pushed tensor along channels.
    SkipConcat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub filters: usize,
    pub repeats: usize,
}

impl BlockSpec {
    pub fn conv_block() -> Self {
        Self { kind: BlockKind::ConvBlock, filters: CONV_BLOCK_GROWTH, repeats: CONV_BLOCK_REPEATS }
    }

    pub fn new(kind: BlockKind, filters: usize) -> Self {
        let repeats = if kind == BlockKind::DiscResidual { 2 } else { 1 };
        Self { kind, filters, repeats }
    }

    fn marker(kind: BlockKind) -> Self {
        Self { kind, filters: 0, repeats: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTrace {
    pub name: String,
    pub output: Shape,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeTrace {
    pub input: Shape,
    pub layers: Vec<LayerTrace>,
    pub total_params: u64,
    pub warnings: Vec<String>,
}

impl ShapeTrace {
    /// Running output shape (side heads excluded).
    pub fn output(&self) -> Shape {
        self.layers
            .iter()
            .rev()
            .find(|l| !l.name.starts_with("head"))
            .map_or(self.input, |l| l.output)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<28} {:>6} {:>6} {:>6} {:>12}\n", "layer", "H", "W", "C", "params");
        for l in &self.layers {
            out.push_str(&format!(
                "{:<28} {:>6} {:>6} {:>6} {:>12}\n",
                l.name, l.output.h, l.output.w, l.output.c, l.params
            ));
        }
        out.push_str(&format!("{:<28} {:>33}\n", "total", self.total_params));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// `k*k*cin*cout + cout`.
pub fn conv_params(k: usize, cin: usize, cout: usize) -> u64 {
    (k * k * cin * cout + cout) as u64
}

/// Scale and shift per channel.
pub fn batchnorm_params(c: usize) -> u64 {
    2 * c as u64
}

fn halve(s: Shape, name: &str) -> Result<Shape> {
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::Precondition(format!("{name}: cannot pool odd spatial size {}x{}", s.h, s.w)));
    }
    Ok(Shape { h: s.h / 2, w: s.w / 2, ..s })
}

pub fn propagate(config: &[BlockSpec], input: (usize, usize, usize)) -> Result<ShapeTrace> {
    let (h, w, c) = input;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::InvalidArgument("input shape must be positive".into()));
    }
    let pools = config
        .iter()
        .filter(|b| matches!(b.kind, BlockKind::Downsample | BlockKind::DiscResidual))
        .count() as u32;
    let factor = 1usize.checked_shl(pools).filter(|f| *f > 0).ok_or_else(|| {
        Error::InvalidArgument(format!("{pools} downsampling stages overflow"))
    })?;
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Precondition(format!(
            "input {h}x{w} is not divisible by 2^{pools} = {factor}"
        )));
    }
    let mut cur = Shape { h, w, c };
    let mut layers = Vec::new();
    let mut skips: Vec<Shape> = Vec::new();
    let mut warnings = Vec::new();
    let mut count = std::collections::BTreeMap::<&str, usize>::new();
    for b in config {
        let needs_filters = !matches!(b.kind, BlockKind::SkipPush | BlockKind::SkipConcat);
        if needs_filters && (b.filters == 0 || b.repeats == 0) {
            return Err(Error::InvalidArgument(format!("{:?} needs filters and repeats >= 1", b.kind)));
        }
        let label = match b.kind {
            BlockKind::ConvBlock => "conv_block",
            BlockKind::Downsample => "downsample",
            BlockKind::Upsample => "upsample",
            BlockKind::DiscResidual => "residual",
            BlockKind::Conv1x1 => "conv1x1",
            BlockKind::FinalConv => "final_conv",
            BlockKind::ClassifierHead => "head",
            BlockKind::SkipPush => "skip_push",
            BlockKind::SkipConcat => "skip_concat",
        };
        let idx = count.entry(label).or_insert(0);
        let name = format!("{label}_{}", *idx);
        *idx += 1;
        let (out, params) = match b.kind {
            BlockKind::ConvBlock => {
                let mut p = 0;
                let mut ch = cur.c;
                for _ in 0..b.repeats {
                    p += batchnorm_params(ch) + conv_params(3, ch, b.filters);
                    ch += b.filters;
                }
                (Shape { c: ch, ..cur }, p)
            }
            BlockKind::Downsample => {
                let s = halve(cur, &name)?;
                (Shape { c: b.filters, ..s }, conv_params(3, cur.c, b.filters))
            }
            BlockKind::Upsample => (
                Shape { h: cur.h * 2, w: cur.w * 2, c: b.filters },
                conv_params(3, cur.c, b.filters),
            ),
            BlockKind::DiscResidual => {
                let s = halve(cur, &name)?;
                let mut p = conv_params(3, cur.c, b.filters);
                let mut ch = cur.c;
                for _ in 0..b.repeats {
                    p += batchnorm_params(ch) + conv_params(3, ch, b.filters);
                    ch = b.filters;
                }
                (Shape { c: b.filters, ..s }, p)
            }
            BlockKind::Conv1x1 => (Shape { c: b.filters, ..cur }, conv_params(1, cur.c, b.filters)),
            BlockKind::FinalConv => (Shape { c: b.filters, ..cur }, conv_params(3, cur.c, b.filters)),
            BlockKind::ClassifierHead => {
                let p = conv_params(1, cur.c, b.filters);
                layers.push(LayerTrace { name, output: Shape { h: 1, w: 1, c: b.filters }, params: p });
                continue;
            }
            BlockKind::SkipPush => {
                skips.push(cur);
                (cur, 0)
            }
            BlockKind::SkipConcat => {
                let s = skips.pop().ok_or_else(|| {
                    Error::InvalidArgument(format!("{name}: no saved tensor to concatenate"))
                })?;
                if (s.h, s.w) != (cur.h, cur.w) {
                    return Err(Error::Precondition(format!(
                        "{name}: skip is {}x{}, current tensor is {}x{}",
                        s.h, s.w, cur.h, cur.w
                    )));
                }
                (Shape { c: cur.c + s.c, ..cur }, 0)
            }
        };
        if out.c > CHANNEL_LINT {
            warnings.push(format!("{name}: {} channels exceeds {CHANNEL_LINT}", out.c));
        }
        cur = out;
        layers.push(LayerTrace { name, output: out, params });
    }
    if !skips.is_empty() {
        warnings.push(format!("{} saved skip tensors never concatenated", skips.len()));
    }
    let encoder_stages = config
        .iter()
        .filter(|b| b.kind == BlockKind::Downsample)
        .count();
    if encoder_stages > 0 && encoder_stages != SUMMARY_STAGE_COUNT {
        warnings.push(format!(
            "encoder has {encoder_stages} conv/downsample stages, but the prose architecture \
             summary describes {SUMMARY_STAGE_COUNT}; the block listing is followed"
        ));
    }
    let total_params = layers.iter().map(|l| l.params).sum();
    Ok(ShapeTrace { input: Shape { h, w, c }, layers, total_params, warnings })
}

/// Generator: 7 x (conv block, skip, downsample), 1x1 latent conv,
/// 7 x (upsample, skip concat, conv block), final 3x3 conv to RGB.
pub fn envmapnet_config() -> Vec<BlockSpec> {
    let mut cfg = Vec::new();
    for &dk in &ENCODER_FILTERS {
        cfg.push(BlockSpec::conv_block());
        cfg.push(BlockSpec::marker(BlockKind::SkipPush));
        cfg.push(BlockSpec::new(BlockKind::Downsample, dk));
    }
    cfg.push(BlockSpec::new(BlockKind::Conv1x1, LATENT_FILTERS));
    for &uk in &DECODER_FILTERS {
        cfg.push(BlockSpec::new(BlockKind::Upsample, uk));
        cfg.push(BlockSpec::marker(BlockKind::SkipConcat));
        cfg.push(BlockSpec::conv_block());
    }
    cfg.push(BlockSpec::new(BlockKind::FinalConv, 3));
    cfg
}

/// Discriminator: 7 residual blocks, then real/fake and cluster-id heads.
pub fn discriminator_config(clusters: usize) -> Vec<BlockSpec> {
    let mut cfg: Vec<BlockSpec> = DISCRIMINATOR_FILTERS
        .iter()
        .map(|&ak| BlockSpec::new(BlockKind::DiscResidual, ak))
        .collect();
    cfg.push(BlockSpec::new(BlockKind::ClassifierHead, 1));
    cfg.push(BlockSpec::new(BlockKind::ClassifierHead, clusters));
    cfg
}

/// `(generator, discriminator)` with the default 5 clusters.
pub fn builtin_configs() -> (Vec<BlockSpec>, Vec<BlockSpec>) {
    (envmapnet_config(), discriminator_config(crate::clusters::DEFAULT_CLUSTERS))
}

/// RGB plus mask channel.
pub const GENERATOR_INPUT: (usize, usize, usize) = (128, 256, 4);
pub const DISCRIMINATOR_INPUT: (usize, usize, usize) = (128, 256, 3);
