use std::collections::BTreeMap;

use geoalign::geom::{OrientedBox3, Vec3};
use geoalign::metrics::{
    aggregate_scenes, caption_scores, detection_prf, frame_accuracy, grounding_accuracy,
    pointmap_eval, pointmap_eval_pooled, CaptionScores, DetectionMetrics, DetectionScene, EvalMode,
    GroundingResult, PointmapMetrics,
};
use geoalign::predparse::{parse_bbox3d, parse_detections, parse_frame, DetectionPred, Task};
use rayon::prelude::*;
use serde::Serialize;

use super::{write_err, CliError, CmdResult};
use crate::args::{
    EvalCaptionArgs, EvalDetectionArgs, EvalGroundingArgs, EvalPointmapArgs, MedianMode, ModeArg,
};
use crate::formats;
use crate::io::{write_report, Diagnostic};

type Predictions = BTreeMap<(String, Task), String>;

fn lookup<'a>(preds: &'a Predictions, id: &str, task: Task) -> Option<&'a str> {
    preds.get(&(id.to_string(), task)).map(String::as_str)
}

#[derive(Debug, Serialize)]
struct GroundingReport {
    #[serde(flatten)]
    boxes: GroundingResult,
    n_missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame_accuracy: Option<f64>,
    n_frame_samples: usize,
}

pub fn grounding(args: &EvalGroundingArgs) -> CmdResult {
    let preds = formats::load_predictions(&args.pred)?;
    let gts = formats::load_grounding_gt(&args.gt)?;

    let mut n_missing = 0;
    let mut box_preds: Vec<(String, Option<OrientedBox3>)> = Vec::new();
    let mut box_gts = Vec::new();
    let mut frame_preds: Vec<(String, Option<usize>)> = Vec::new();
    let mut frame_gts = Vec::new();
    for (id, gt, frame) in &gts {
        let text = lookup(&preds, id, Task::GroundingBox);
        n_missing += usize::from(text.is_none());
        box_preds.push((id.clone(), text.and_then(|t| parse_bbox3d(t).ok()).map(|p| p.bbox_3d)));
        box_gts.push((id.clone(), *gt));
        if let Some(f) = frame {
            let text = lookup(&preds, id, Task::GroundingFrame);
            frame_preds.push((id.clone(), text.and_then(|t| parse_frame(t).ok()).map(|p| p.frame)));
            frame_gts.push((id.clone(), *f));
        }
    }
    let boxes = grounding_accuracy(&box_preds, &box_gts)?;
    let frame_acc = if frame_gts.is_empty() {
        None
    } else {
        Some(frame_accuracy(&frame_preds, &frame_gts)?)
    };
    let summary = format!(
        "Acc@0.25 {:.4} Acc@0.5 {:.4} over {} samples ({} parse failures)",
        boxes.acc_025, boxes.acc_05, boxes.n_samples, boxes.n_parse_failures
    );
    let report = GroundingReport {
        boxes,
        n_missing,
        frame_accuracy: frame_acc,
        n_frame_samples: frame_gts.len(),
    };
    write_report(&args.out, "eval-grounding", args, report).map_err(write_err(&args.out))?;
    Ok(summary)
}

pub fn detection(args: &EvalDetectionArgs) -> CmdResult {
    if !(args.iou > 0.0 && args.iou < 1.0) {
        return Err(geoalign::Error::InvalidArgument(format!("--iou must be in (0, 1), got {}", args.iou)).into());
    }
    let preds = formats::load_predictions(&args.pred)?;
    let gts = formats::load_detection_gt(&args.gt)?;
    let classes = formats::load_classes(&args.classes)?;

    let scenes: Vec<DetectionScene> = gts
        .into_iter()
        .map(|(id, gts)| {
            let preds = match lookup(&preds, &id, Task::Detection) {
                None => DetectionPred::default(),
                Some(t) => parse_detections(t).unwrap_or(DetectionPred {
                    entries: Vec::new(),
                    parse_failures: 1,
                }),
            };
            DetectionScene { preds, gts }
        })
        .collect();
    let per_scene: Vec<DetectionMetrics> = scenes
        .par_iter()
        .map(|s| detection_prf(std::slice::from_ref(s), args.iou, &classes, args.strict))
        .collect::<Result<_, _>>()?;
    let sum = |f: fn(&DetectionMetrics) -> usize| per_scene.iter().map(f).sum::<usize>();
    let m = DetectionMetrics::from_counts(
        sum(|m| m.tp),
        sum(|m| m.fp),
        sum(|m| m.fn_),
        sum(|m| m.parse_failures),
        sum(|m| m.out_of_class),
    );
    let summary = format!(
        "P {:.4} R {:.4} F1 {:.4} (tp {} fp {} fn {}) over {} scenes",
        m.precision,
        m.recall,
        m.f1,
        m.tp,
        m.fp,
        m.fn_,
        scenes.len()
    );
    write_report(&args.out, "eval-detection", args, m).map_err(write_err(&args.out))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct CaptionReport {
    #[serde(flatten)]
    scores: CaptionScores,
    n_missing: usize,
}

pub fn caption(args: &EvalCaptionArgs) -> CmdResult {
    let preds = formats::load_predictions(&args.pred)?;
    let items = formats::load_caption_gt(&args.gt)?;
    let mut n_missing = 0;
    let cands: Vec<String> = items
        .iter()
        .map(|it| match lookup(&preds, &it.sample_id, Task::Caption) {
            Some(t) => t.trim().to_string(),
            None => {
                n_missing += 1;
                String::new()
            }
        })
        .collect();
    let refs: Vec<Vec<String>> = items.iter().map(|it| it.references.clone()).collect();
    let ious: Vec<f64> = items.iter().map(|it| it.iou).collect();
    let scores = caption_scores(&cands, &refs, &ious, args.iou_gate)?;
    let summary = format!(
        "CIDEr {:.4} BLEU-4 {:.4} ROUGE-L {:.4} ({} of {} samples pass the IoU gate)",
        scores.cider_at_05, scores.bleu4_at_05, scores.rouge_l_at_05, scores.n_passing, scores.n_samples
    );
    write_report(&args.out, "eval-caption", args, CaptionReport { scores, n_missing })
        .map_err(write_err(&args.out))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct PointmapReport {
    overall: PointmapMetrics,
    scenes: BTreeMap<String, PointmapMetrics>,
}

pub fn pointmap(args: &EvalPointmapArgs) -> CmdResult {
    let pred = formats::load_point_clouds(&args.pred)?;
    let gt = formats::load_point_clouds(&args.gt)?;
    let missing: Vec<Diagnostic> = gt
        .keys()
        .filter(|k| !pred.contains_key(*k))
        .map(|k| Diagnostic::new(&args.pred, None, format!("no prediction for scene {k:?}")))
        .chain(
            pred.keys()
                .filter(|k| !gt.contains_key(*k))
                .map(|k| Diagnostic::new(&args.pred, None, format!("scene {k:?} has no ground truth"))),
        )
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Invalid(missing));
    }
    if gt.is_empty() {
        return Err(CliError::Invalid(vec![Diagnostic::new(&args.gt, None, "no scenes")]));
    }
    let mode = match args.mode {
        ModeArg::Aligned => EvalMode::Aligned,
        ModeArg::Metric => EvalMode::Metric,
    };
    let pairs: Vec<(&String, &Vec<Vec3>, &Vec<Vec3>)> =
        gt.iter().map(|(k, g)| (k, &pred[k], g)).collect();
    let per_scene: Vec<PointmapMetrics> = pairs
        .par_iter()
        .map(|(_, p, g)| pointmap_eval(p, g, mode))
        .collect::<Result<_, _>>()?;
    let overall = match args.median {
        MedianMode::PerScene => aggregate_scenes(&per_scene)?,
        MedianMode::Pooled => {
            let owned: Vec<(Vec<Vec3>, Vec<Vec3>)> =
                pairs.iter().map(|(_, p, g)| ((*p).clone(), (*g).clone())).collect();
            pointmap_eval_pooled(&owned, mode)?
        }
    };
    let summary = format!(
        "{mode} accuracy {:.6} completeness {:.6} overall {:.6} over {} scenes",
        overall.accuracy.mean,
        overall.completeness.mean,
        overall.overall.mean,
        per_scene.len()
    );
    let scenes = pairs.iter().map(|(k, _, _)| (*k).clone()).zip(per_scene).collect();
    write_report(&args.out, "eval-pointmap", args, PointmapReport { overall, scenes })
        .map_err(write_err(&args.out))?;
    Ok(summary)
}
