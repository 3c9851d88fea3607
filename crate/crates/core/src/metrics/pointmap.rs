use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::geom::{umeyama_sim3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Sim(3)-align predictions to ground truth first.
    Aligned,
    /// Compare in the predicted metric frame directly.
    Metric,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Aligned => "aligned",
            EvalMode::Metric => "metric",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(EvalMode::Aligned),
            "metric" => Ok(EvalMode::Metric),
            _ => Err(Error::invalid(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointmapMetrics {
    pub mode: EvalMode,
    pub accuracy: Stat,
    pub completeness: Stat,
    pub overall: Stat,
}

/// Median with the two middle values averaged for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn nn_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let tree = KdTree::new(to);
    from.iter()
        .map(|p| tree.nearest(p).expect("non-empty target").1)
        .collect()
}

/// Accuracy and completeness distance lists after optional alignment.
fn distances(pred: &[Vec3], gt: &[Vec3], mode: EvalMode) -> Result<(Vec<f64>, Vec<f64>)> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::invalid("pointmap evaluation needs non-empty point sets"));
    }
    let aligned;
    let pred = match mode {
        EvalMode::Metric => pred,
        EvalMode::Aligned => {
            if pred.len() != gt.len() {
                return Err(Error::invalid(format!(
                    "aligned mode needs corresponding points, got {} predicted and {} ground-truth",
                    pred.len(),
                    gt.len()
                )));
            }
            aligned = umeyama_sim3(pred, gt)?.apply_all(pred);
            &aligned
        }
    };
    Ok((nn_distances(pred, gt), nn_distances(gt, pred)))
}

fn summarize(mode: EvalMode, acc: &[f64], comp: &[f64]) -> PointmapMetrics {
    let accuracy = Stat {
        mean: mean(acc),
        median: median(acc),
    };
    let completeness = Stat {
        mean: mean(comp),
        median: median(comp),
    };
    PointmapMetrics {
        mode,
        accuracy,
        completeness,
        overall: Stat {
            mean: 0.5 * (accuracy.mean + completeness.mean),
            median: 0.5 * (accuracy.median + completeness.median),
        },
    }
}

/// Accuracy (pred → gt nearest distances), completeness (gt → pred) and their
/// average. Aligned mode fits a Sim(3) on corresponding points (same index)
/// and applies it to the predictions first.
pub fn pointmap_eval(pred: &[Vec3], gt: &[Vec3], mode: EvalMode) -> Result<PointmapMetrics> {
    let (acc, comp) = distances(pred, gt, mode)?;
    Ok(summarize(mode, &acc, &comp))
}

/// Unweighted mean across scenes of every field.
pub fn aggregate_scenes(per_scene: &[PointmapMetrics]) -> Result<PointmapMetrics> {
    let first = per_scene
        .first()
        .ok_or_else(|| Error::invalid("no scenes to aggregate"))?;
    if per_scene.iter().any(|m| m.mode != first.mode) {
        return Err(Error::invalid("cannot aggregate aligned and metric results together"));
    }
    let n = per_scene.len() as f64;
    let avg = |f: fn(&PointmapMetrics) -> Stat| Stat {
        mean: per_scene.iter().map(|m| f(m).mean).sum::<f64>() / n,
        median: per_scene.iter().map(|m| f(m).median).sum::<f64>() / n,
    };
    Ok(PointmapMetrics {
        mode: first.mode,
        accuracy: avg(|m| m.accuracy),
        completeness: avg(|m| m.completeness),
        overall: avg(|m| m.overall),
    })
}

/// Alternative aggregation: per-scene alignment, then mean and median over the
/// pooled distances of all scenes.
pub fn pointmap_eval_pooled(scenes: &[(Vec<Vec3>, Vec<Vec3>)], mode: EvalMode) -> Result<PointmapMetrics> {
    if scenes.is_empty() {
        return Err(Error::invalid("no scenes to evaluate"));
    }
    let (mut acc, mut comp) = (Vec::new(), Vec::new());
    for (p, g) in scenes {
        let (a, c) = distances(p, g, mode)?;
        acc.extend(a);
        comp.extend(c);
    }
    Ok(summarize(mode, &acc, &comp))
}
