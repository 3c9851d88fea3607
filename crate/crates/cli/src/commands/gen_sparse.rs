use std::collections::BTreeSet;

use geoalign::frame::{discover_scenes, load_scene};
use geoalign::predparse::{PromptPayload, Task};
use geoalign::sparse::{
    emit_conversation, generate_scene_samples, read_annotations, render_marked_frame, Message,
    SceneSamples, SparseConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_err, CliError, CmdResult};
use crate::args::GenSparseArgs;
use crate::io::{to_jsonl, write_atomic, write_report};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMeta {
    pub frame_indices: Vec<usize>,
    pub marked_frame: usize,
    pub pixel: [u32; 2],
    pub point_raw: [f64; 3],
}

/// One line of `gen-sparse` output; also a valid `prompt-emit` input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseRecord {
    pub sample_id: String,
    pub scene_id: String,
    pub task: Task,
    pub label: String,
    pub pointmap: [f64; 3],
    pub payload: PromptPayload,
    pub messages: Vec<Message>,
    pub target: String,
    pub meta: SampleMeta,
}

#[derive(Debug, Serialize)]
struct SceneAccount {
    scene_id: String,
    objects: usize,
    attempted: usize,
    accepted: usize,
    skipped: usize,
}

#[derive(Debug, Serialize)]
struct GenReport {
    scenes: Vec<SceneAccount>,
    total_samples: usize,
}

fn records(s: &SceneSamples) -> Result<Vec<SparseRecord>, CliError> {
    s.samples
        .iter()
        .enumerate()
        .map(|(k, sample)| {
            let conv = emit_conversation(sample)?;
            let p = sample.point_first_frame;
            let r = sample.point_raw;
            Ok(SparseRecord {
                sample_id: format!("{}_{k:06}", s.scene_id),
                scene_id: s.scene_id.clone(),
                task: Task::SparsePoint,
                label: sample.label.clone(),
                pointmap: [p.x, p.y, p.z],
                payload: PromptPayload {
                    num_frames: Some(sample.frame_indices.len()),
                    marked_frame: Some(sample.marked_position()),
                    ..Default::default()
                },
                messages: conv.messages,
                target: conv.target,
                meta: SampleMeta {
                    frame_indices: sample.frame_indices.clone(),
                    marked_frame: sample.marked_frame,
                    pixel: [sample.pixel.0, sample.pixel.1],
                    point_raw: [r.x, r.y, r.z],
                },
            })
        })
        .collect()
}

pub fn run(args: &GenSparseArgs) -> CmdResult {
    let annotations = read_annotations(&args.annotations)?;
    let cfg = SparseConfig {
        fps: args.fps,
        window: args.window,
        tolerance: args.tolerance,
        samples_per_window: args.samples_per_window,
    };
    let dirs = discover_scenes(&args.scenes)?;
    let no_objects = Vec::new();

    let per_scene: Vec<(SceneSamples, usize, Vec<SparseRecord>)> = dirs
        .par_iter()
        .map(|dir| {
            let scene = load_scene(dir)?;
            let objects = annotations.get(scene.pack.scene_id()).unwrap_or(&no_objects);
            let samples = generate_scene_samples(&scene, objects, &cfg, args.seed)?;
            let recs = records(&samples)?;
            if let Some(render) = &args.render_dir {
                for (rec, sample) in recs.iter().zip(&samples.samples) {
                    let frame = scene.pack.frame(sample.marked_frame).expect("marked frame exists");
                    render_marked_frame(
                        &scene.root.join(&frame.image_ref),
                        sample.pixel,
                        &render.join(format!("{}.png", rec.sample_id)),
                    )?;
                }
            }
            Ok((samples, objects.len(), recs))
        })
        .collect::<Result<_, CliError>>()?;

    let mut seen = BTreeSet::new();
    for (s, _, _) in &per_scene {
        if !seen.insert(s.scene_id.as_str()) {
            return Err(geoalign::Error::InvalidArgument(format!("scene id {:?} appears twice", s.scene_id)).into());
        }
    }

    let all: Vec<&SparseRecord> = per_scene.iter().flat_map(|(_, _, r)| r).collect();
    write_atomic(&args.out, &to_jsonl(&all)).map_err(write_err(&args.out))?;

    let report = GenReport {
        scenes: per_scene
            .iter()
            .map(|(s, n, _)| SceneAccount {
                scene_id: s.scene_id.clone(),
                objects: *n,
                attempted: s.attempted,
                accepted: s.accepted(),
                skipped: s.skipped,
            })
            .collect(),
        total_samples: all.len(),
    };
    let summary = format!("{} samples from {} scenes", all.len(), per_scene.len());
    if let Some(path) = &args.report {
        write_report(path, "gen-sparse", args, report).map_err(write_err(path))?;
    }
    Ok(summary)
}
