//! Analytic gradients of the merge → gate → fuse path and their verification
//! against central finite differences.

use serde::Serialize;

use super::grid::TokenGrid;
use super::mlp::{sigmoid, Mlp2, Mlp2Grad, PARAM_SUFFIXES};
use super::ops::{gather_block, GateMlpParams, MergeMlpParams};
use crate::error::{Error, Result};

/// Denominator floor of the relative error, so parameters with vanishing
/// gradients are compared on an absolute scale.
pub const GRAD_ERROR_FLOOR: f64 = 1e-4;

/// Learnable parameters of one gated fusion layer, including both token mergers.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFusionParams {
    pub merge_visual: MergeMlpParams,
    pub merge_geometric: MergeMlpParams,
    pub gate: GateMlpParams,
}

impl GatedFusionParams {
    pub fn channels(&self) -> usize {
        self.gate.channels()
    }

    fn groups(&self) -> [(&'static str, &Mlp2); 3] {
        [
            ("merge_visual", &self.merge_visual.0),
            ("merge_geometric", &self.merge_geometric.0),
            ("gate", &self.gate.0),
        ]
    }

    fn groups_mut(&mut self) -> [&mut Mlp2; 3] {
        [
            &mut self.merge_visual.0,
            &mut self.merge_geometric.0,
            &mut self.gate.0,
        ]
    }
}

/// Raw (pre-merge) grids for both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInputs {
    pub visual_raw: TokenGrid,
    pub geometric_raw: TokenGrid,
}

/// Scalar loss of the fused output.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// Mean over elements of `(fused − target)²`.
    SquaredError { target: TokenGrid },
    /// `Σ weights ⊙ fused`.
    Linear { weights: TokenGrid },
}

impl LossSpec {
    fn value_and_grad(&self, fused: &TokenGrid) -> Result<(f64, Vec<f64>)> {
        let (reference, what) = match self {
            LossSpec::SquaredError { target } => (target, "loss target"),
            LossSpec::Linear { weights } => (weights, "loss weights"),
        };
        fused.ensure_same_shape(reference, what)?;
        let (value, grad) = match self {
            LossSpec::SquaredError { target } => {
                let n = fused.data().len() as f64;
                let diff: Vec<f64> = fused
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(f, t)| f - t)
                    .collect();
                let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
                (value, diff.iter().map(|d| 2.0 * d / n).collect())
            }
            LossSpec::Linear { weights } => (
                fused
                    .data()
                    .iter()
                    .zip(weights.data())
                    .map(|(f, w)| f * w)
                    .sum(),
                weights.data().to_vec(),
            ),
        };
        if !value.is_finite() {
            return Err(Error::Numerical(format!("loss is not finite ({value})")));
        }
        Ok((value, grad))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedFusionGrads {
    pub merge_visual: Mlp2Grad,
    pub merge_geometric: Mlp2Grad,
    pub gate: Mlp2Grad,
}

impl GatedFusionGrads {
    fn groups(&self) -> [&Mlp2Grad; 3] {
        [&self.merge_visual, &self.merge_geometric, &self.gate]
    }
}

fn check_inputs(params: &GatedFusionParams, inputs: &FusionInputs) -> Result<()> {
    inputs
        .visual_raw
        .ensure_same_shape(&inputs.geometric_raw, "fusion inputs")?;
    let raw = &inputs.visual_raw;
    if !raw.rows().is_multiple_of(2) || !raw.cols().is_multiple_of(2) {
        return Err(Error::invalid("token merging needs even grid dimensions"));
    }
    let c = params.channels();
    if raw.channels() != c
        || params.merge_visual.channels() != c
        || params.merge_geometric.channels() != c
    {
        return Err(Error::invalid("channel count mismatch between inputs and parameters"));
    }
    Ok(())
}

/// Forward pass returning the fused grid.
pub fn gated_fusion_forward(params: &GatedFusionParams, inputs: &FusionInputs) -> Result<TokenGrid> {
    check_inputs(params, inputs)?;
    let v = super::merge_tokens(&inputs.visual_raw, &params.merge_visual)?;
    let g = super::merge_tokens(&inputs.geometric_raw, &params.merge_geometric)?;
    let gate = super::gate_coefficients(&v, &g, &params.gate)?;
    super::fuse_gated(&v, &g, &gate)
}

pub fn gated_fusion_loss(
    params: &GatedFusionParams,
    inputs: &FusionInputs,
    loss: &LossSpec,
) -> Result<f64> {
    let fused = gated_fusion_forward(params, inputs)?;
    Ok(loss.value_and_grad(&fused)?.0)
}

/// Loss value and analytic gradients with respect to every parameter.
pub fn gated_fusion_gradients(
    params: &GatedFusionParams,
    inputs: &FusionInputs,
    loss: &LossSpec,
) -> Result<(f64, GatedFusionGrads)> {
    check_inputs(params, inputs)?;
    let c = params.channels();
    let raw = &inputs.visual_raw;
    let (rows, cols) = (raw.rows() / 2, raw.cols() / 2);

    struct TokenCache {
        v: Vec<f64>,
        g: Vec<f64>,
        gate: Vec<f64>,
        merge_v: super::mlp::Mlp2Cache,
        merge_g: super::mlp::Mlp2Cache,
        gate_cache: super::mlp::Mlp2Cache,
    }

    let mut caches = Vec::with_capacity(rows * cols);
    let mut fused = Vec::with_capacity(rows * cols * c);
    for r in 0..rows {
        for col in 0..cols {
            let (v, merge_v) = params
                .merge_visual
                .0
                .forward_cached(&gather_block(&inputs.visual_raw, r, col));
            let (g, merge_g) = params
                .merge_geometric
                .0
                .forward_cached(&gather_block(&inputs.geometric_raw, r, col));
            let cat: Vec<f64> = v.iter().chain(&g).copied().collect();
            let (logits, gate_cache) = params.gate.0.forward_cached(&cat);
            let gate: Vec<f64> = logits.into_iter().map(sigmoid).collect();
            fused.extend((0..c).map(|k| gate[k] * v[k] + (1.0 - gate[k]) * g[k]));
            caches.push(TokenCache {
                v,
                g,
                gate,
                merge_v,
                merge_g,
                gate_cache,
            });
        }
    }
    let fused = TokenGrid::new(rows, cols, c, fused)?;
    let (value, dfused) = loss.value_and_grad(&fused)?;

    let mut grads = GatedFusionGrads {
        merge_visual: params.merge_visual.0.zero_grad(),
        merge_geometric: params.merge_geometric.0.zero_grad(),
        gate: params.gate.0.zero_grad(),
    };
    for (t, cache) in caches.iter().enumerate() {
        let df = &dfused[t * c..(t + 1) * c];
        let mut dv: Vec<f64> = (0..c).map(|k| df[k] * cache.gate[k]).collect();
        let mut dg: Vec<f64> = (0..c).map(|k| df[k] * (1.0 - cache.gate[k])).collect();
        let dlogits: Vec<f64> = (0..c)
            .map(|k| {
                let s = cache.gate[k];
                df[k] * (cache.v[k] - cache.g[k]) * s * (1.0 - s)
            })
            .collect();
        let dcat = params
            .gate
            .0
            .backward(&cache.gate_cache, &dlogits, &mut grads.gate);
        for k in 0..c {
            dv[k] += dcat[k];
            dg[k] += dcat[c + k];
        }
        params
            .merge_visual
            .0
            .backward(&cache.merge_v, &dv, &mut grads.merge_visual);
        params
            .merge_geometric
            .0
            .backward(&cache.merge_g, &dg, &mut grads.merge_geometric);
    }
    Ok((value, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamGroupError {
    pub name: String,
    pub num_params: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub step: f64,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub groups: Vec<ParamGroupError>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn group(&self, name: &str) -> Option<&ParamGroupError> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// `|a − n| / max(|a|, |n|, GRAD_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_ERROR_FLOOR)
}

/// Compares analytic gradients for every gate and merge parameter against
/// central differences `(L(θ + h) − L(θ − h)) / 2h`.
pub fn grad_check(
    loss: &LossSpec,
    params: &GatedFusionParams,
    inputs: &FusionInputs,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let (value, analytic) = gated_fusion_gradients(params, inputs, loss)?;
    let mut work = params.clone();
    let mut groups = Vec::new();
    for (gi, (group_name, mlp)) in params.groups().iter().enumerate() {
        let analytic_group = analytic.groups()[gi].params();
        for (pi, suffix) in PARAM_SUFFIXES.iter().enumerate() {
            let n = mlp.params()[pi].len();
            let mut max_rel = 0.0f64;
            let mut max_abs = 0.0f64;
            for i in 0..n {
                let orig = mlp.params()[pi][i];
                work.groups_mut()[gi].params_mut()[pi][i] = orig + step;
                let plus = gated_fusion_loss(&work, inputs, loss)?;
                work.groups_mut()[gi].params_mut()[pi][i] = orig - step;
                let minus = gated_fusion_loss(&work, inputs, loss)?;
                work.groups_mut()[gi].params_mut()[pi][i] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic_group[pi][i];
                max_rel = max_rel.max(relative_error(a, numeric));
                max_abs = max_abs.max((a - numeric).abs());
            }
            groups.push(ParamGroupError {
                name: format!("{group_name}.{suffix}"),
                num_params: n,
                max_relative_error: max_rel,
                max_abs_error: max_abs,
            });
        }
    }
    let max_relative_error = groups
        .iter()
        .map(|g| g.max_relative_error)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        loss: value,
        step,
        tolerance,
        max_relative_error,
        passed: max_relative_error <= tolerance,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::mlp::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, c: usize, activation: Activation) -> (GatedFusionParams, FusionInputs, TokenGrid) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = GatedFusionParams {
            merge_visual: MergeMlpParams::random(c, activation, &mut rng),
            merge_geometric: MergeMlpParams::random(c, activation, &mut rng),
            gate: GateMlpParams::random(c, activation, &mut rng),
        };
        let inputs = FusionInputs {
            visual_raw: TokenGrid::random(4, 4, c, 1.0, &mut rng).unwrap(),
            geometric_raw: TokenGrid::random(4, 4, c, 1.0, &mut rng).unwrap(),
        };
        let target = TokenGrid::random(2, 2, c, 1.0, &mut rng).unwrap();
        (params, inputs, target)
    }

    #[test]
    fn random_configuration_passes() {
        let (params, inputs, target) = setup(1, 4, Activation::Gelu);
        let report = grad_check(&LossSpec::SquaredError { target }, &params, &inputs, 1e-5, 1e-5).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.groups.len(), 12);
    }

    #[test]
    fn linear_path_is_exact() {
        // Zero gate weights make the gate constant, so the loss is linear in
        // each individual merge parameter.
        let (mut params, inputs, _) = setup(2, 4, Activation::Identity);
        params.gate = GateMlpParams::constant(4, 0.3);
        params.gate.0.activation = Activation::Identity;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let weights = TokenGrid::random(2, 2, 4, 1.0, &mut rng).unwrap();
        let report = grad_check(&LossSpec::Linear { weights }, &params, &inputs, 0.5, 1e-12).unwrap();
        for g in report.groups.iter().filter(|g| g.name.starts_with("merge")) {
            assert!(g.max_relative_error <= 1e-12, "{g:?}");
        }
    }

    #[test]
    fn saturated_gate_has_flat_bias_gradient() {
        let (mut params, inputs, target) = setup(4, 4, Activation::Gelu);
        params.gate = GateMlpParams::constant(4, 50.0);
        let (_, grads) =
            gated_fusion_gradients(&params, &inputs, &LossSpec::SquaredError { target }).unwrap();
        assert!(grads.gate.fc2.bias.iter().all(|g| g.abs() <= 1e-8));
    }

    #[test]
    fn bad_step_and_nonfinite_loss() {
        let (params, inputs, target) = setup(5, 2, Activation::Gelu);
        let loss = LossSpec::SquaredError { target: target.clone() };
        assert!(grad_check(&loss, &params, &inputs, 0.0, 1e-5).is_err());
        let huge = TokenGrid::filled(2, 2, 2, 1e300).unwrap();
        let err = grad_check(&LossSpec::SquaredError { target: huge }, &params, &inputs, 1e-5, 1e-5);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }
}
