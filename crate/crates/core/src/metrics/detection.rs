use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::matching::maximum_matching;
use crate::error::{Error, Result};
use crate::geom::{box_iou, OrientedBox3};
use crate::predparse::DetectionPred;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub parse_failures: usize,
    /// Parsed predictions whose class is not in the class list (not scored).
    pub out_of_class: usize,
}

impl DetectionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, parse_failures: usize, out_of_class: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        DetectionMetrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            parse_failures,
            out_of_class,
        }
    }
}

/// Predictions and ground truth for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionScene {
    pub preds: DetectionPred,
    pub gts: Vec<(String, OrientedBox3)>,
}

pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Precision/recall/F1 with per-scene, per-class maximum-cardinality matching
/// at `IoU ≥ iou_thresh` (ties broken by total IoU), micro-aggregated.
///
/// Predictions outside `classes` are ignored and counted in `out_of_class`;
/// ground-truth boxes outside `classes` are ignored. With `strict`, every
/// dropped malformed entry also counts as a false positive.
pub fn detection_prf(
    scenes: &[DetectionScene],
    iou_thresh: f64,
    classes: &[String],
    strict: bool,
) -> Result<DetectionMetrics> {
    if classes.is_empty() {
        return Err(Error::invalid("class list is empty"));
    }
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::invalid(format!("IoU threshold must be in (0, 1), got {iou_thresh}")));
    }
    let classes: BTreeSet<String> = classes.iter().map(|c| normalize_label(c)).collect();
    let (mut tp, mut fp, mut fn_, mut failures, mut ooc) = (0, 0, 0, 0, 0);
    for scene in scenes {
        failures += scene.preds.parse_failures;
        let preds: Vec<(String, &OrientedBox3)> = scene
            .preds
            .entries
            .iter()
            .map(|e| (normalize_label(&e.label), &e.bbox_3d))
            .collect();
        ooc += preds.iter().filter(|(l, _)| !classes.contains(l)).count();
        for class in &classes {
            let p: Vec<&OrientedBox3> = preds.iter().filter(|(l, _)| l == class).map(|x| x.1).collect();
            let g: Vec<&OrientedBox3> = scene
                .gts
                .iter()
                .filter(|(l, _)| normalize_label(l) == *class)
                .map(|x| &x.1)
                .collect();
            if p.is_empty() && g.is_empty() {
                continue;
            }
            let ious: Vec<Vec<f64>> = p.iter().map(|a| g.iter().map(|b| box_iou(a, b)).collect()).collect();
            let matched = if g.is_empty() { 0 } else { maximum_matching(&ious, iou_thresh).len() };
            tp += matched;
            fp += p.len() - matched;
            fn_ += g.len() - matched;
        }
    }
    if strict {
        fp += failures;
    }
    Ok(DetectionMetrics::from_counts(tp, fp, fn_, failures, ooc))
}
