//! Up-front schema checks: every referenced file is checked before any compute.

use std::path::Path;

use geoalign::frame::{discover_scenes, read_header, sidecar_path, FrameEntry, SceneFile, SCENE_FILE};
use geoalign::geom::Pose;
use geoalign::predparse::Task;
use geoalign::sparse::AnnotationFile;

use crate::args::Command;
use crate::commands::fusion_demo::DemoConfig;
use crate::formats;
use crate::io::{read_json, read_jsonl, Checked, Diagnostic};

fn collect<T>(r: Checked<T>, diags: &mut Vec<Diagnostic>) {
    if let Err(d) = r {
        diags.extend(d);
    }
}

fn check_frame(scene_json: &Path, dir: &Path, f: &FrameEntry, diags: &mut Vec<Diagnostic>) {
    let at = |defect: String| Diagnostic::new(scene_json, None, format!("frame {}: {defect}", f.index));
    if let Err(e) = Pose::from_row_major_4x4(&f.pose, geoalign::frame::POSE_FILE_TOLERANCE) {
        diags.push(at(format!("pose: {e}")));
    }
    if let Err(e) = f.intrinsics.validate() {
        diags.push(at(format!("intrinsics: {e}")));
    }
    let raster = dir.join(&f.depth);
    let side = sidecar_path(&raster);
    let header = match read_header(&side) {
        Ok(h) => h,
        Err(e) => {
            diags.push(Diagnostic::new(&side, None, e.to_string()));
            return;
        }
    };
    for (field, got, want) in [
        ("width", header.width, f.intrinsics.width),
        ("height", header.height, f.intrinsics.height),
    ] {
        if got != want {
            diags.push(Diagnostic::new(
                &side,
                None,
                format!("field `{field}` is {got} but frame {} intrinsics say {want}", f.index),
            ));
        }
    }
    if !(header.depth_scale.is_finite() && header.depth_scale > 0.0) {
        diags.push(Diagnostic::new(&side, None, "field `depth_scale` must be positive"));
    }
    match std::fs::metadata(&raster) {
        Ok(m) => {
            let want = header.width as u64 * header.height as u64 * 2;
            if m.len() != want {
                diags.push(Diagnostic::new(
                    &raster,
                    None,
                    format!("raster has {} bytes, header needs {want}", m.len()),
                ));
            }
        }
        Err(e) => diags.push(Diagnostic::new(&raster, None, format!("cannot read: {e}"))),
    }
}

/// Checks every scene pack under `root` without loading rasters.
pub fn validate_scenes(root: &Path) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let dirs = match discover_scenes(root) {
        Ok(d) if d.is_empty() => return vec![Diagnostic::new(root, None, "no scene packs found")],
        Ok(d) => d,
        Err(e) => return vec![Diagnostic::new(root, None, e.to_string())],
    };
    for dir in dirs {
        let path = dir.join(SCENE_FILE);
        let file: SceneFile = match read_json(&path) {
            Ok(f) => f,
            Err(d) => {
                diags.extend(d);
                continue;
            }
        };
        if file.frames.is_empty() {
            diags.push(Diagnostic::new(&path, None, "scene has no frames"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &file.frames {
            if !seen.insert(f.index) {
                diags.push(Diagnostic::new(&path, None, format!("duplicate frame index {}", f.index)));
            }
            check_frame(&path, &dir, f, &mut diags);
        }
        if file.frames.windows(2).any(|w| !(w[1].timestamp >= w[0].timestamp)) {
            diags.push(Diagnostic::new(&path, None, "timestamps must be non-decreasing"));
        }
    }
    diags
}

pub fn validate_annotations(path: &Path) -> Vec<Diagnostic> {
    let file: AnnotationFile = match read_json(path) {
        Ok(f) => f,
        Err(d) => return d,
    };
    let mut diags = Vec::new();
    for (scene, entries) in &file {
        for (i, e) in entries.iter().enumerate() {
            if let Err(err) = e.to_annotation() {
                diags.push(Diagnostic::new(path, None, format!("{scene}[{i}]: {err}")));
            }
        }
    }
    diags
}

/// All defects in the files a command references; empty when the inputs are usable.
pub fn validate_inputs(cmd: &Command) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    match cmd {
        Command::GenSparse(a) => {
            d.extend(validate_scenes(&a.scenes));
            d.extend(validate_annotations(&a.annotations));
        }
        Command::EvalGrounding(a) => {
            collect(formats::load_predictions(&a.pred), &mut d);
            collect(formats::load_grounding_gt(&a.gt), &mut d);
        }
        Command::EvalDetection(a) => {
            collect(formats::load_predictions(&a.pred), &mut d);
            collect(formats::load_detection_gt(&a.gt), &mut d);
            collect(formats::load_classes(&a.classes), &mut d);
        }
        Command::EvalCaption(a) => {
            collect(formats::load_predictions(&a.pred), &mut d);
            collect(formats::load_caption_gt(&a.gt), &mut d);
        }
        Command::EvalPointmap(a) => {
            collect(formats::load_point_clouds(&a.pred), &mut d);
            collect(formats::load_point_clouds(&a.gt), &mut d);
        }
        Command::FusionDemo(a) => match read_json::<DemoConfig>(&a.config) {
            Ok(c) => {
                if let Err(e) = c.check() {
                    d.push(Diagnostic::new(&a.config, None, e));
                }
            }
            Err(e) => d.extend(e),
        },
        Command::PromptEmit(a) => {
            let fallback = a.task.as_deref().map(str::parse::<Task>);
            if let Some(Err(e)) = &fallback {
                d.push(Diagnostic::new(&a.input, None, format!("--task: {e}")));
            }
            match read_jsonl::<formats::PromptRequest>(&a.input) {
                Ok(rows) => {
                    for (line, r) in rows {
                        if r.task.is_none() && fallback.is_none() {
                            d.push(Diagnostic::new(&a.input, Some(line), "record has no task and --task is not set"));
                        }
                    }
                }
                Err(e) => d.extend(e),
            }
        }
    }
    d
}
