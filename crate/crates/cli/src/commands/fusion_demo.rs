use std::ffi::OsString;
use std::path::{Path, PathBuf};

use geoalign::fusion::{
    deepstack_apply, gate_statistics, grad_check, Activation, FusionConfig, FusionInputs,
    FusionModel, FusionVariant, GateMlpParams, GatedFusionParams, LossSpec, MergeMlpParams,
    TokenGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_err, CliError, CmdResult};
use crate::args::FusionDemoArgs;
use crate::io::{write_atomic, write_report};

fn default_channels() -> usize {
    8
}
fn default_grid() -> [usize; 2] {
    [8, 8]
}
fn default_variant() -> FusionVariant {
    FusionVariant::Gated
}
fn default_num_layers() -> usize {
    FusionConfig::DEFAULT_NUM_LAYERS
}
fn default_inject() -> Vec<usize> {
    FusionConfig::DEFAULT_INJECT_LAYERS.to_vec()
}
fn default_activation() -> Activation {
    Activation::Gelu
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckSettings {
    pub trials: usize,
    pub channels: usize,
    pub grid: [usize; 2],
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            trials: 100,
            channels: 4,
            grid: [4, 4],
            step: 1e-5,
            tolerance: 1e-5,
        }
    }
}

/// `fusion-demo` configuration file; every key is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Raw (pre-merge) grid as `[rows, cols]`; both must be even.
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    #[serde(default = "default_variant")]
    pub variant: FusionVariant,
    #[serde(default = "default_num_layers")]
    pub num_layers: usize,
    #[serde(default = "default_inject")]
    pub inject_layers: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Inputs are drawn uniformly from `[-input_scale, input_scale)`.
    #[serde(default = "one")]
    pub input_scale: f64,
    #[serde(default)]
    pub grad_check: GradCheckSettings,
}

impl DemoConfig {
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            num_layers: self.num_layers,
            inject_layers: self.inject_layers.clone(),
            channels: self.channels,
            variant: self.variant,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        self.fusion_config().validate().map_err(|e| e.to_string())?;
        let even = |g: [usize; 2]| g.iter().all(|&d| d > 0 && d % 2 == 0);
        if !even(self.grid) {
            return Err(format!("grid {:?} must have positive even dimensions", self.grid));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err("input_scale must be positive".into());
        }
        let g = &self.grad_check;
        if g.trials == 0 || g.channels == 0 || !even(g.grid) {
            return Err("grad_check needs trials > 0, channels > 0 and an even grid".into());
        }
        if !(g.step > 0.0 && g.tolerance > 0.0) {
            return Err("grad_check step and tolerance must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct LayerSummary {
    layer: usize,
    fused_mean_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gate_mean: Option<f64>,
}

#[derive(Debug, Serialize)]
struct GradSummary {
    trials: usize,
    max_relative_error: f64,
    worst_trial: usize,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct DemoReport {
    config: DemoConfig,
    num_params: usize,
    layers: Vec<LayerSummary>,
    /// Largest absolute change of each injected decoder layer.
    injection_delta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_check: Option<GradSummary>,
}

fn mean_abs(g: &TokenGrid) -> f64 {
    g.data().iter().map(|v| v.abs()).sum::<f64>() / g.data().len() as f64
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn run_grad_check(cfg: &DemoConfig, rng: &mut ChaCha8Rng) -> Result<GradSummary, CliError> {
    let g = &cfg.grad_check;
    let (c, [rows, cols]) = (g.channels, g.grid);
    let mut worst = (0.0f64, 0usize);
    for trial in 0..g.trials {
        let params = GatedFusionParams {
            merge_visual: MergeMlpParams::random(c, cfg.activation, rng),
            merge_geometric: MergeMlpParams::random(c, cfg.activation, rng),
            gate: GateMlpParams::random(c, cfg.activation, rng),
        };
        let inputs = FusionInputs {
            visual_raw: TokenGrid::random(rows, cols, c, cfg.input_scale, rng)?,
            geometric_raw: TokenGrid::random(rows, cols, c, cfg.input_scale, rng)?,
        };
        let target = TokenGrid::random(rows / 2, cols / 2, c, 1.0, rng)?;
        let r = grad_check(&LossSpec::SquaredError { target }, &params, &inputs, g.step, g.tolerance)?;
        if r.max_relative_error > worst.0 {
            worst = (r.max_relative_error, trial);
        }
    }
    Ok(GradSummary {
        trials: g.trials,
        max_relative_error: worst.0,
        worst_trial: worst.1,
        tolerance: g.tolerance,
        passed: worst.0 <= g.tolerance,
    })
}

pub fn run(args: &FusionDemoArgs, cfg: DemoConfig) -> CmdResult {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let fc = cfg.fusion_config();
    let model = FusionModel::random(fc.clone(), cfg.activation, &mut rng)?;
    let [rows, cols] = cfg.grid;
    let c = cfg.channels;
    let raw = |rng: &mut ChaCha8Rng| -> Result<Vec<TokenGrid>, CliError> {
        (0..fc.num_layers)
            .map(|_| Ok(TokenGrid::random(rows, cols, c, cfg.input_scale, rng)?))
            .collect()
    };
    let visual = raw(&mut rng)?;
    let geometric = raw(&mut rng)?;
    let fused = model.forward(&visual, &geometric)?;

    let gates: Vec<_> = fused.iter().filter_map(|f| f.gate.clone()).collect();
    let gate_means = if gates.is_empty() {
        Vec::new()
    } else {
        gate_statistics(&gates)?
    };
    let layers = fused
        .iter()
        .enumerate()
        .map(|(i, f)| LayerSummary {
            layer: i + 1,
            fused_mean_abs: mean_abs(&f.tokens),
            gate_mean: gate_means.get(i).copied(),
        })
        .collect();

    let hidden: Vec<TokenGrid> = (0..fc.inject_layers.len())
        .map(|_| TokenGrid::random(rows / 2, cols / 2, c, 1.0, &mut rng))
        .collect::<Result<_, _>>()?;
    let tokens: Vec<TokenGrid> = fused.iter().map(|f| f.tokens.clone()).collect();
    let injected = deepstack_apply(&hidden, &tokens, &fc)?;
    let injection_delta = injected
        .iter()
        .zip(&hidden)
        .map(|(a, b)| a.max_abs_diff(b))
        .collect();

    let grad = if args.grad_check {
        Some(run_grad_check(&cfg, &mut rng)?)
    } else {
        None
    };

    if let Some(prefix) = &args.save_params {
        let json = with_suffix(prefix, "json");
        let bin = with_suffix(prefix, "bin");
        let mut text = serde_json::to_vec_pretty(&model.manifest()).expect("manifest serializes");
        text.push(b'\n');
        write_atomic(&bin, &model.to_bytes()).map_err(write_err(&bin))?;
        write_atomic(&json, &text).map_err(write_err(&json))?;
    }

    let num_params = model.manifest().total_len;
    let mut summary = format!("{} layers, {} parameters, variant {}", fc.num_layers, num_params, fc.variant);
    let failed = grad.as_ref().is_some_and(|g| !g.passed);
    if let Some(g) = &grad {
        summary.push_str(&format!(
            ", gradient check max relative error {:.3e} over {} trials",
            g.max_relative_error, g.trials
        ));
    }
    let report = DemoReport {
        config: cfg,
        num_params,
        layers,
        injection_delta,
        grad_check: grad,
    };
    write_report(&args.out, "fusion-demo", args, report).map_err(write_err(&args.out))?;
    if failed {
        return Err(geoalign::Error::Numerical(format!("gradient check failed: {summary}")).into());
    }
    Ok(summary)
}
