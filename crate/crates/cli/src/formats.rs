//! Ground-truth and prediction file schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use geoalign::geom::{OrientedBox3, Vec3};
use geoalign::predparse::{PredictionRecord, PromptPayload, Task};
use serde::{Deserialize, Serialize};

use crate::io::{read_jsonl, Checked, Diagnostic};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingGt {
    pub sample_id: String,
    pub bbox_3d: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtObject {
    pub label: String,
    pub bbox_3d: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionGt {
    pub sample_id: String,
    pub objects: Vec<GtObject>,
}

/// Either a precomputed `iou` or both boxes must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionGt {
    pub sample_id: String,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_box: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_box: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCloudRecord {
    pub scene_id: String,
    pub points: Vec<[f64; 3]>,
}

/// Input line for `prompt-emit`; other fields (as in `gen-sparse` output) are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRequest {
    pub sample_id: String,
    #[serde(default)]
    pub task: Option<Task>,
    pub payload: PromptPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptLine {
    pub sample_id: String,
    pub task: Task,
    pub prompt: String,
}

/// Decodes a 9-number box, naming the key and arity on failure.
pub fn decode_box(values: &[f64], key: &str) -> Result<OrientedBox3, String> {
    let arr: &[f64; 9] = values
        .try_into()
        .map_err(|_| format!("{key} must have 9 numbers, found {}", values.len()))?;
    OrientedBox3::from_array(arr).map_err(|e| format!("{key}: {e}"))
}

fn check_unique<'a>(path: &Path, ids: impl Iterator<Item = (usize, &'a str)>, diags: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for (line, id) in ids {
        if !seen.insert(id) {
            diags.push(Diagnostic::new(path, Some(line), format!("duplicate id {id:?}")));
        }
    }
}

fn finish<T>(value: T, diags: Vec<Diagnostic>) -> Checked<T> {
    if diags.is_empty() {
        Ok(value)
    } else {
        Err(diags)
    }
}

pub fn load_grounding_gt(path: &Path) -> Checked<Vec<(String, OrientedBox3, Option<usize>)>> {
    let rows: Vec<(usize, GroundingGt)> = read_jsonl(path)?;
    let mut diags = Vec::new();
    check_unique(path, rows.iter().map(|(l, r)| (*l, r.sample_id.as_str())), &mut diags);
    let mut out = Vec::new();
    for (line, r) in rows {
        match decode_box(&r.bbox_3d, "bbox_3d") {
            Ok(b) => out.push((r.sample_id, b, r.frame)),
            Err(e) => diags.push(Diagnostic::new(path, Some(line), e)),
        }
    }
    finish(out, diags)
}

/// Sample id with its labelled boxes.
pub type DetectionGtScene = (String, Vec<(String, OrientedBox3)>);

pub fn load_detection_gt(path: &Path) -> Checked<Vec<DetectionGtScene>> {
    let rows: Vec<(usize, DetectionGt)> = read_jsonl(path)?;
    let mut diags = Vec::new();
    check_unique(path, rows.iter().map(|(l, r)| (*l, r.sample_id.as_str())), &mut diags);
    let mut out = Vec::new();
    for (line, r) in rows {
        let mut objs = Vec::new();
        for (k, o) in r.objects.iter().enumerate() {
            match decode_box(&o.bbox_3d, &format!("objects[{k}].bbox_3d")) {
                Ok(b) => objs.push((o.label.clone(), b)),
                Err(e) => diags.push(Diagnostic::new(path, Some(line), e)),
            }
        }
        out.push((r.sample_id, objs));
    }
    finish(out, diags)
}

pub struct CaptionItem {
    pub sample_id: String,
    pub references: Vec<String>,
    pub iou: f64,
}

pub fn load_caption_gt(path: &Path) -> Checked<Vec<CaptionItem>> {
    let rows: Vec<(usize, CaptionGt)> = read_jsonl(path)?;
    let mut diags = Vec::new();
    check_unique(path, rows.iter().map(|(l, r)| (*l, r.sample_id.as_str())), &mut diags);
    let mut out = Vec::new();
    for (line, r) in rows {
        if r.references.is_empty() {
            diags.push(Diagnostic::new(path, Some(line), "references must be non-empty"));
            continue;
        }
        let iou = match (r.iou, &r.gt_box, &r.pred_box) {
            (Some(x), None, None) if (0.0..=1.0).contains(&x) => Ok(x),
            (Some(x), None, None) => Err(format!("iou must lie in [0, 1], got {x}")),
            (None, Some(g), Some(p)) => decode_box(g, "gt_box")
                .and_then(|g| decode_box(p, "pred_box").map(|p| geoalign::geom::box_iou(&p, &g))),
            _ => Err("give either iou or both gt_box and pred_box".to_string()),
        };
        match iou {
            Ok(iou) => out.push(CaptionItem {
                sample_id: r.sample_id,
                references: r.references,
                iou,
            }),
            Err(e) => diags.push(Diagnostic::new(path, Some(line), e)),
        }
    }
    finish(out, diags)
}

pub fn load_point_clouds(path: &Path) -> Checked<BTreeMap<String, Vec<Vec3>>> {
    let rows: Vec<(usize, PointCloudRecord)> = read_jsonl(path)?;
    let mut diags = Vec::new();
    check_unique(path, rows.iter().map(|(l, r)| (*l, r.scene_id.as_str())), &mut diags);
    let mut out = BTreeMap::new();
    for (line, r) in rows {
        if r.points.is_empty() {
            diags.push(Diagnostic::new(path, Some(line), "points must be non-empty"));
        } else if r.points.iter().flatten().any(|v| !v.is_finite()) {
            diags.push(Diagnostic::new(path, Some(line), "points must be finite"));
        } else {
            out.insert(r.scene_id, r.points.into_iter().map(Vec3::from).collect());
        }
    }
    finish(out, diags)
}

/// Predictions keyed by `(sample_id, task)`.
pub fn load_predictions(path: &Path) -> Checked<BTreeMap<(String, Task), String>> {
    let rows: Vec<(usize, PredictionRecord)> = read_jsonl(path)?;
    let mut diags = Vec::new();
    let mut out = BTreeMap::new();
    for (line, r) in rows {
        if out.insert((r.sample_id.clone(), r.task), r.raw_text).is_some() {
            diags.push(Diagnostic::new(
                path,
                Some(line),
                format!("duplicate prediction for {:?} ({})", r.sample_id, r.task),
            ));
        }
    }
    finish(out, diags)
}

pub fn load_classes(path: &Path) -> Checked<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new(path, None, format!("cannot read: {e}"))])?;
    let classes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if classes.is_empty() {
        return Err(vec![Diagnostic::new(path, None, "class list is empty")]);
    }
    Ok(classes)
}
