use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::TokenGrid;
use super::mlp::{Activation, Linear, Mlp2, PARAM_SUFFIXES};
use super::ops::{
    fuse_variant, merge_tokens, FusedLayer, FusionConfig, FusionVariant, GateMlpParams,
    MergeMlpParams, VariantParams,
};
use crate::error::{Error, Result};

/// Independent parameters of one encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub merge_visual: MergeMlpParams,
    pub merge_geometric: MergeMlpParams,
    pub fusion: VariantParams,
}

/// Multi-level fusion over all encoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub activation: Activation,
    pub layers: Vec<LayerParams>,
}

impl FusionModel {
    pub fn random(config: FusionConfig, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                merge_visual: MergeMlpParams::random(c, activation, rng),
                merge_geometric: MergeMlpParams::random(c, activation, rng),
                fusion: VariantParams::random(config.variant, c, activation, rng),
            })
            .collect();
        Ok(FusionModel {
            config,
            activation,
            layers,
        })
    }

    /// Merges and fuses every layer. Inputs are raw patch-resolution grids, one
    /// per layer and branch.
    pub fn forward(
        &self,
        visual_raw: &[TokenGrid],
        geometric_raw: &[TokenGrid],
    ) -> Result<Vec<FusedLayer>> {
        let l = self.config.num_layers;
        if visual_raw.len() != l || geometric_raw.len() != l {
            return Err(Error::invalid(format!(
                "expected {l} layers per branch, got {} visual and {} geometric",
                visual_raw.len(),
                geometric_raw.len()
            )));
        }
        self.layers
            .iter()
            .zip(visual_raw.iter().zip(geometric_raw))
            .map(|(p, (v, g))| {
                let v = merge_tokens(v, &p.merge_visual)?;
                let g = merge_tokens(g, &p.merge_geometric)?;
                fuse_variant(&v, &g, &self.config, &p.fusion)
            })
            .collect()
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let c = self.config.channels;
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("layer{:02}", i + 1);
            push_mlp(&mut out, format!("{p}.merge_visual"), &layer.merge_visual.0);
            push_mlp(&mut out, format!("{p}.merge_geometric"), &layer.merge_geometric.0);
            match &layer.fusion {
                VariantParams::Add => {}
                VariantParams::Weighted { alpha } => {
                    out.push((format!("{p}.weighted.alpha"), vec![1], std::slice::from_ref(alpha)))
                }
                VariantParams::CrossAttention { query, key, value } => {
                    out.push((format!("{p}.attention.query"), vec![c, c], query));
                    out.push((format!("{p}.attention.key"), vec![c, c], key));
                    out.push((format!("{p}.attention.value"), vec![c, c], value));
                }
                VariantParams::Gated(gate) => push_mlp(&mut out, format!("{p}.gate"), &gate.0),
            }
        }
        out
    }

    pub fn manifest(&self) -> ParamManifest {
        let mut offset = 0;
        let tensors = self
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| {
                let entry = TensorEntry {
                    name,
                    shape,
                    offset,
                    len: data.len(),
                };
                offset += data.len();
                entry
            })
            .collect();
        ParamManifest {
            format: MANIFEST_FORMAT.to_string(),
            variant: self.config.variant,
            channels: self.config.channels,
            num_layers: self.config.num_layers,
            inject_layers: self.config.inject_layers.clone(),
            activation: self.activation,
            total_len: offset,
            tensors,
        }
    }

    /// Flat little-endian f64 buffer, in manifest order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, _, d)| d.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>())
            .collect()
    }

    pub fn save(&self, manifest_path: &Path, buffer_path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
        std::fs::write(buffer_path, self.to_bytes()).map_err(|e| Error::io(buffer_path, e))
    }

    pub fn load(manifest_path: &Path, buffer_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: ParamManifest =
            serde_json::from_str(&text).map_err(|e| Error::schema(manifest_path, e.to_string()))?;
        let bytes = std::fs::read(buffer_path).map_err(|e| Error::io(buffer_path, e))?;
        Self::from_parts(&manifest, &bytes).map_err(|e| Error::schema(manifest_path, e.to_string()))
    }

    pub fn from_parts(manifest: &ParamManifest, bytes: &[u8]) -> Result<Self> {
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::invalid(format!("unsupported format {:?}", manifest.format)));
        }
        if bytes.len() != manifest.total_len * 8 {
            return Err(Error::invalid(format!(
                "buffer has {} bytes, manifest needs {}",
                bytes.len(),
                manifest.total_len * 8
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let config = FusionConfig {
            num_layers: manifest.num_layers,
            inject_layers: manifest.inject_layers.clone(),
            channels: manifest.channels,
            variant: manifest.variant,
        };
        config.validate()?;

        let lookup = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = manifest
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::invalid(format!("manifest lacks tensor {name}")))?;
            if t.shape != shape || t.len != shape.iter().product::<usize>() {
                return Err(Error::invalid(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            values
                .get(t.offset..t.offset + t.len)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::invalid(format!("tensor {name} runs past the buffer")))
        };
        let mlp = |prefix: &str, dims: [usize; 3]| -> Result<Mlp2> {
            let [i, h, o] = dims;
            Mlp2::new(
                Linear::new(
                    i,
                    h,
                    lookup(&format!("{prefix}.fc1.weight"), &[h, i])?,
                    lookup(&format!("{prefix}.fc1.bias"), &[h])?,
                )?,
                Linear::new(
                    h,
                    o,
                    lookup(&format!("{prefix}.fc2.weight"), &[o, h])?,
                    lookup(&format!("{prefix}.fc2.bias"), &[o])?,
                )?,
                manifest.activation,
            )
        };
        let c = config.channels;
        let layers = (1..=config.num_layers)
            .map(|l| {
                let p = format!("layer{l:02}");
                let fusion = match config.variant {
                    FusionVariant::Add => VariantParams::Add,
                    FusionVariant::Weighted => VariantParams::Weighted {
                        alpha: lookup(&format!("{p}.weighted.alpha"), &[1])?[0],
                    },
                    FusionVariant::CrossAttention => VariantParams::CrossAttention {
                        query: lookup(&format!("{p}.attention.query"), &[c, c])?,
                        key: lookup(&format!("{p}.attention.key"), &[c, c])?,
                        value: lookup(&format!("{p}.attention.value"), &[c, c])?,
                    },
                    FusionVariant::Gated => VariantParams::Gated(GateMlpParams::new(
                        mlp(&format!("{p}.gate"), [2 * c, c, c])?,
                        c,
                    )?),
                };
                Ok(LayerParams {
                    merge_visual: MergeMlpParams::new(
                        mlp(&format!("{p}.merge_visual"), [4 * c, 4 * c, c])?,
                        c,
                    )?,
                    merge_geometric: MergeMlpParams::new(
                        mlp(&format!("{p}.merge_geometric"), [4 * c, 4 * c, c])?,
                        c,
                    )?,
                    fusion,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FusionModel {
            config,
            activation: manifest.activation,
            layers,
        })
    }
}

fn push_mlp<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, prefix: String, mlp: &'a Mlp2) {
    let shapes = [
        vec![mlp.fc1.out_dim, mlp.fc1.in_dim],
        vec![mlp.fc1.out_dim],
        vec![mlp.fc2.out_dim, mlp.fc2.in_dim],
        vec![mlp.fc2.out_dim],
    ];
    for ((suffix, shape), data) in PARAM_SUFFIXES.iter().zip(shapes).zip(mlp.params()) {
        out.push((format!("{prefix}.{suffix}"), shape, data));
    }
}

pub const MANIFEST_FORMAT: &str = "f64-le-flat-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub format: String,
    pub variant: FusionVariant,
    pub channels: usize,
    pub num_layers: usize,
    pub inject_layers: Vec<usize>,
    pub activation: Activation,
    pub total_len: usize,
    pub tensors: Vec<TensorEntry>,
}
