//! Reference math for multi-level geometric–visual token fusion.
//!
//! Per encoder layer, both branches merge 2×2 patch blocks into single tokens,
//! a per-channel sigmoid gate mixes the merged tokens convexly, and fused
//! tokens from selected intermediate layers are added to early decoder hidden
//! states. The additive, scalar-weighted and cross-attention mixers are kept
//! for ablations. All math is `f64`.

mod grad;
mod grid;
mod mlp;
mod model;
mod ops;

pub use grad::{
    grad_check, gated_fusion_forward, gated_fusion_gradients, gated_fusion_loss, relative_error,
    FusionInputs, GatedFusionGrads, GatedFusionParams, GradCheckReport, LossSpec,
    ParamGroupError, GRAD_ERROR_FLOOR,
};
pub use grid::{GateField, TokenGrid};
pub use mlp::{sigmoid, Activation, Linear, LinearGrad, Mlp2, Mlp2Grad};
pub use model::{FusionModel, LayerParams, ParamManifest, TensorEntry, MANIFEST_FORMAT};
pub use ops::{
    deepstack_apply, deepstack_inject, fuse_gated, fuse_variant, gate_coefficients,
    gate_statistics, merge_tokens, FusedLayer, FusionConfig, FusionVariant, GateMlpParams,
    MergeMlpParams, VariantParams,
};
