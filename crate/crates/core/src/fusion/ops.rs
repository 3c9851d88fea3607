use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GateField, TokenGrid};
use super::mlp::{sigmoid, Activation, Linear, Mlp2};
use crate::error::{Error, Result};

/// Token-merging perceptron: concatenated 2×2 block (4c) → 4c → c.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeMlpParams(pub Mlp2);

impl MergeMlpParams {
    pub fn new(mlp: Mlp2, channels: usize) -> Result<Self> {
        if mlp.in_dim() != 4 * channels || mlp.hidden_dim() != 4 * channels || mlp.out_dim() != channels
        {
            return Err(Error::invalid(format!(
                "merge perceptron must be {}->{}->{}, got {}->{}->{}",
                4 * channels,
                4 * channels,
                channels,
                mlp.in_dim(),
                mlp.hidden_dim(),
                mlp.out_dim()
            )));
        }
        Ok(MergeMlpParams(mlp))
    }

    pub fn random(channels: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        MergeMlpParams(Mlp2 {
            fc1: Linear::random(4 * channels, 4 * channels, rng),
            fc2: Linear::random(4 * channels, channels, rng),
            activation,
        })
    }

    pub fn zeros(channels: usize, activation: Activation) -> Self {
        MergeMlpParams(Mlp2 {
            fc1: Linear::zeros(4 * channels, 4 * channels),
            fc2: Linear::zeros(4 * channels, channels),
            activation,
        })
    }

    pub fn channels(&self) -> usize {
        self.0.out_dim()
    }
}

/// Gate perceptron: `[visual, geometric]` (2c) → c → c, followed by a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMlpParams(pub Mlp2);

impl GateMlpParams {
    pub fn new(mlp: Mlp2, channels: usize) -> Result<Self> {
        if mlp.in_dim() != 2 * channels || mlp.hidden_dim() != channels || mlp.out_dim() != channels {
            return Err(Error::invalid(format!(
                "gate perceptron must be {}->{}->{}, got {}->{}->{}",
                2 * channels,
                channels,
                channels,
                mlp.in_dim(),
                mlp.hidden_dim(),
                mlp.out_dim()
            )));
        }
        Ok(GateMlpParams(mlp))
    }

    pub fn random(channels: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        GateMlpParams(Mlp2 {
            fc1: Linear::random(2 * channels, channels, rng),
            fc2: Linear::random(channels, channels, rng),
            activation,
        })
    }

    pub fn zeros(channels: usize, activation: Activation) -> Self {
        GateMlpParams(Mlp2 {
            fc1: Linear::zeros(2 * channels, channels),
            fc2: Linear::zeros(channels, channels),
            activation,
        })
    }

    /// Zero weights with a constant final bias, i.e. a uniform gate `σ(bias)`.
    pub fn constant(channels: usize, final_bias: f64) -> Self {
        let mut p = Self::zeros(channels, Activation::Gelu);
        p.0.fc2.bias.fill(final_bias);
        p
    }

    pub fn channels(&self) -> usize {
        self.0.out_dim()
    }
}

/// Concatenates the 2×2 block at merged position `(r, c)` in row-major block
/// order: top-left, top-right, bottom-left, bottom-right.
pub(crate) fn gather_block(raw: &TokenGrid, r: usize, c: usize) -> Vec<f64> {
    let mut block = Vec::with_capacity(4 * raw.channels());
    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        block.extend_from_slice(raw.token(2 * r + dr, 2 * c + dc));
    }
    block
}

/// Merges each 2×2 patch block into a single token with the merge perceptron.
pub fn merge_tokens(raw: &TokenGrid, params: &MergeMlpParams) -> Result<TokenGrid> {
    if !raw.rows().is_multiple_of(2) || !raw.cols().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "token merging needs even grid dimensions, got {}x{}",
            raw.rows(),
            raw.cols()
        )));
    }
    if params.channels() != raw.channels() {
        return Err(Error::invalid(format!(
            "merge perceptron expects {} channels, grid has {}",
            params.channels(),
            raw.channels()
        )));
    }
    let (rows, cols) = (raw.rows() / 2, raw.cols() / 2);
    let mut data = Vec::with_capacity(rows * cols * raw.channels());
    for r in 0..rows {
        for c in 0..cols {
            data.extend(params.0.forward(&gather_block(raw, r, c)));
        }
    }
    TokenGrid::new(rows, cols, raw.channels(), data)
}

/// Per-token, per-channel gate `σ(MLP([visual, geometric]))`.
pub fn gate_coefficients(
    visual: &TokenGrid,
    geometric: &TokenGrid,
    params: &GateMlpParams,
) -> Result<GateField> {
    visual.ensure_same_shape(geometric, "gate_coefficients")?;
    if params.channels() != visual.channels() {
        return Err(Error::invalid(format!(
            "gate perceptron expects {} channels, grid has {}",
            params.channels(),
            visual.channels()
        )));
    }
    let mut data = Vec::with_capacity(visual.data().len());
    let mut input = Vec::with_capacity(2 * visual.channels());
    for (v, g) in visual.tokens().zip(geometric.tokens()) {
        input.clear();
        input.extend_from_slice(v);
        input.extend_from_slice(g);
        data.extend(params.0.forward(&input).into_iter().map(sigmoid));
    }
    // Saturated logits round to exactly 0 or 1 in f64; keep the open interval.
    for v in &mut data {
        *v = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    }
    Ok(GateField::from_grid_unchecked(TokenGrid::from_parts_unchecked(
        visual.rows(),
        visual.cols(),
        visual.channels(),
        data,
    )))
}

/// `g ⊙ visual + (1 − g) ⊙ geometric`.
pub fn fuse_gated(visual: &TokenGrid, geometric: &TokenGrid, g: &GateField) -> Result<TokenGrid> {
    visual.ensure_same_shape(geometric, "fuse_gated")?;
    visual.ensure_same_shape(g.grid(), "fuse_gated gate")?;
    Ok(convex_mix(visual, geometric, g.values()))
}

/// Convex mix with gate values that may sit on the closed interval [0, 1].
pub(crate) fn convex_mix(visual: &TokenGrid, geometric: &TokenGrid, g: &[f64]) -> TokenGrid {
    let data = visual
        .data()
        .iter()
        .zip(geometric.data())
        .zip(g)
        .map(|((v, geo), w)| w * v + (1.0 - w) * geo)
        .collect();
    TokenGrid::from_parts_unchecked(visual.rows(), visual.cols(), visual.channels(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    Add,
    Weighted,
    CrossAttention,
    Gated,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 4] = [
        FusionVariant::Add,
        FusionVariant::Weighted,
        FusionVariant::CrossAttention,
        FusionVariant::Gated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionVariant::Add => "add",
            FusionVariant::Weighted => "weighted",
            FusionVariant::CrossAttention => "cross_attention",
            FusionVariant::Gated => "gated",
        }
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown fusion variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub num_layers: usize,
    /// 1-based encoder layer indices whose fused tokens are injected into the
    /// decoder, in injection order.
    pub inject_layers: Vec<usize>,
    pub channels: usize,
    pub variant: FusionVariant,
}

impl FusionConfig {
    pub const DEFAULT_NUM_LAYERS: usize = 24;
    pub const DEFAULT_INJECT_LAYERS: [usize; 3] = [5, 11, 17];

    pub fn new(channels: usize, variant: FusionVariant) -> Self {
        FusionConfig {
            num_layers: Self::DEFAULT_NUM_LAYERS,
            inject_layers: Self::DEFAULT_INJECT_LAYERS.to_vec(),
            channels,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.channels == 0 {
            return Err(Error::invalid("num_layers and channels must be positive"));
        }
        if self.inject_layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("inject_layers must be strictly increasing"));
        }
        if let Some(l) = self
            .inject_layers
            .iter()
            .find(|l| **l < 1 || **l >= self.num_layers)
        {
            return Err(Error::invalid(format!(
                "inject layer {l} outside [1, {})",
                self.num_layers
            )));
        }
        Ok(())
    }
}

/// Learnable state of one fusion layer, per variant.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantParams {
    Add,
    /// Single scalar; the visual weight is `σ(alpha)`.
    Weighted { alpha: f64 },
    /// `c × c` projections, row-major, applied as `x W`.
    CrossAttention {
        query: Vec<f64>,
        key: Vec<f64>,
        value: Vec<f64>,
    },
    Gated(GateMlpParams),
}

impl VariantParams {
    pub fn variant(&self) -> FusionVariant {
        match self {
            VariantParams::Add => FusionVariant::Add,
            VariantParams::Weighted { .. } => FusionVariant::Weighted,
            VariantParams::CrossAttention { .. } => FusionVariant::CrossAttention,
            VariantParams::Gated(_) => FusionVariant::Gated,
        }
    }

    pub fn random(
        variant: FusionVariant,
        channels: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        let mat = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
            (0..channels * channels)
                .map(|_| rng.random_range(-bound..bound))
                .collect()
        };
        match variant {
            FusionVariant::Add => VariantParams::Add,
            FusionVariant::Weighted => VariantParams::Weighted {
                alpha: rng.random_range(-1.0..1.0),
            },
            FusionVariant::CrossAttention => VariantParams::CrossAttention {
                query: mat(rng),
                key: mat(rng),
                value: mat(rng),
            },
            FusionVariant::Gated => {
                VariantParams::Gated(GateMlpParams::random(channels, activation, rng))
            }
        }
    }
}

/// Output of one fusion layer; `gate` is set for the gated variant only.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedLayer {
    pub tokens: TokenGrid,
    pub gate: Option<GateField>,
}

/// Fuses merged visual and geometric tokens with the configured ablation variant.
pub fn fuse_variant(
    visual: &TokenGrid,
    geometric: &TokenGrid,
    config: &FusionConfig,
    params: &VariantParams,
) -> Result<FusedLayer> {
    visual.ensure_same_shape(geometric, "fuse_variant")?;
    if params.variant() != config.variant {
        return Err(Error::invalid(format!(
            "configured variant {} but parameters are for {}",
            config.variant,
            params.variant()
        )));
    }
    if visual.channels() != config.channels {
        return Err(Error::invalid(format!(
            "config has {} channels, grids have {}",
            config.channels,
            visual.channels()
        )));
    }
    match params {
        VariantParams::Add => Ok(FusedLayer {
            tokens: visual.zip_map(geometric, |a, b| a + b),
            gate: None,
        }),
        VariantParams::Weighted { alpha } => {
            if !alpha.is_finite() {
                return Err(Error::invalid("weighted fusion alpha must be finite"));
            }
            let w = sigmoid(*alpha);
            Ok(FusedLayer {
                tokens: visual.zip_map(geometric, |a, b| w * a + (1.0 - w) * b),
                gate: None,
            })
        }
        VariantParams::CrossAttention { query, key, value } => Ok(FusedLayer {
            tokens: cross_attention(visual, geometric, query, key, value)?,
            gate: None,
        }),
        VariantParams::Gated(gate) => {
            let g = gate_coefficients(visual, geometric, gate)?;
            Ok(FusedLayer {
                tokens: fuse_gated(visual, geometric, &g)?,
                gate: Some(g),
            })
        }
    }
}

fn project_tokens(grid: &TokenGrid, w: &[f64]) -> Vec<Vec<f64>> {
    let c = grid.channels();
    grid.tokens()
        .map(|x| {
            (0..c)
                .map(|j| (0..c).map(|i| x[i] * w[i * c + j]).sum())
                .collect()
        })
        .collect()
}

/// Single-head scaled dot-product attention: visual queries, geometric keys and
/// values, output added residually to the visual tokens.
fn cross_attention(
    visual: &TokenGrid,
    geometric: &TokenGrid,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
) -> Result<TokenGrid> {
    let c = visual.channels();
    for (name, w) in [("query", wq), ("key", wk), ("value", wv)] {
        if w.len() != c * c {
            return Err(Error::invalid(format!(
                "cross-attention {name} projection must be {c}x{c}"
            )));
        }
    }
    let q = project_tokens(visual, wq);
    let k = project_tokens(geometric, wk);
    let v = project_tokens(geometric, wv);
    let scale = 1.0 / (c as f64).sqrt();
    let mut data = visual.data().to_vec();
    for (t, qt) in q.iter().enumerate() {
        let logits: Vec<f64> = k
            .iter()
            .map(|kt| qt.iter().zip(kt).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        let out = &mut data[t * c..(t + 1) * c];
        for (w, vt) in weights.iter().zip(&v) {
            for (o, x) in out.iter_mut().zip(vt) {
                *o += w / z * x;
            }
        }
    }
    TokenGrid::new(visual.rows(), visual.cols(), c, data)
}

/// Adds fused tokens to a decoder hidden-state grid.
pub fn deepstack_inject(hidden: &TokenGrid, fused: &TokenGrid) -> Result<TokenGrid> {
    hidden.ensure_same_shape(fused, "deepstack_inject")?;
    Ok(hidden.zip_map(fused, |a, b| a + b))
}

/// Injects `fused_by_layer[l - 1]` for the k-th configured layer `l` into
/// `decoder_hidden[k]`; remaining decoder layers pass through.
pub fn deepstack_apply(
    decoder_hidden: &[TokenGrid],
    fused_by_layer: &[TokenGrid],
    config: &FusionConfig,
) -> Result<Vec<TokenGrid>> {
    config.validate()?;
    if fused_by_layer.len() != config.num_layers {
        return Err(Error::invalid(format!(
            "expected fused tokens for {} layers, got {}",
            config.num_layers,
            fused_by_layer.len()
        )));
    }
    if decoder_hidden.len() < config.inject_layers.len() {
        return Err(Error::invalid(format!(
            "{} decoder layers cannot receive {} injections",
            decoder_hidden.len(),
            config.inject_layers.len()
        )));
    }
    let mut out = decoder_hidden.to_vec();
    for (k, layer) in config.inject_layers.iter().enumerate() {
        out[k] = deepstack_inject(&decoder_hidden[k], &fused_by_layer[layer - 1])?;
    }
    Ok(out)
}

/// Mean gate value per layer.
pub fn gate_statistics(gates: &[GateField]) -> Result<Vec<f64>> {
    if gates.is_empty() {
        return Err(Error::invalid("gate statistics need at least one layer"));
    }
    Ok(gates.iter().map(GateField::mean).collect())
}
