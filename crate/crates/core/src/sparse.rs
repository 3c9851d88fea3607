//! Prompted-pixel supervision samples: a red cross marks one pixel in a short
//! frame window, and the answer is that pixel's semantic label and metric 3D
//! coordinate in the window's first camera frame.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{
    back_project, project, quantize_metric, to_first_frame, DepthRaster, FrameRecord, LoadedScene,
    ScenePack,
};
use crate::geom::{OrientedBox3, Vec3};
use crate::predparse::{
    point_semantic_body, serialize_point_semantic, serialize_prompt, PointSemanticPred,
    PromptPayload, Task,
};

/// Maximum |raster depth − projected depth| for a center to count as visible.
pub const DEFAULT_VISIBILITY_TOLERANCE: f64 = 0.10;
pub const CROSS_ARM: i64 = 12;
pub const CROSS_THICKNESS: i64 = 3;
pub const CROSS_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub label: String,
    pub center_world: Vec3,
    pub box_world: Option<OrientedBox3>,
}

impl ObjectAnnotation {
    pub fn new(label: impl Into<String>, center_world: Vec3, box_world: Option<OrientedBox3>) -> Result<Self> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(Error::invalid("object label must be non-empty"));
        }
        if !center_world.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("object {label:?} has a non-finite center")));
        }
        Ok(ObjectAnnotation {
            label,
            center_world,
            box_world,
        })
    }
}

/// One object in the annotation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationEntry {
    pub label: String,
    pub center_world: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_world: Option<[f64; 9]>,
}

/// Annotation file: scene id → objects in world coordinates.
pub type AnnotationFile = BTreeMap<String, Vec<AnnotationEntry>>;

impl AnnotationEntry {
    pub fn from_annotation(a: &ObjectAnnotation) -> Self {
        AnnotationEntry {
            label: a.label.clone(),
            center_world: a.center_world.into(),
            box_world: a.box_world.map(|b| b.to_array()),
        }
    }

    pub fn to_annotation(&self) -> Result<ObjectAnnotation> {
        let box_world = self.box_world.as_ref().map(OrientedBox3::from_array).transpose()?;
        ObjectAnnotation::new(self.label.clone(), Vec3::from(self.center_world), box_world)
    }
}

pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, Vec<ObjectAnnotation>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: AnnotationFile =
        serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
    file.into_iter()
        .map(|(scene, entries)| {
            let objs = entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    e.to_annotation()
                        .map_err(|err| Error::schema(path, format!("{scene}[{i}]: {err}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((scene, objs))
        })
        .collect()
}

/// Picks the frames nearest to a `1/fps` time grid anchored at the first frame
/// (ties go to the earlier frame), drops picks that repeat a timestamp, and
/// returns every run of `window` consecutive picks as frame indices.
pub fn sample_frames(pack: &ScenePack, fps: f64, window: usize) -> Result<Vec<Vec<usize>>> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::invalid(format!("fps must be positive, got {fps}")));
    }
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    let frames = pack.frames();
    let times: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let steps = (span * fps + 1e-9).floor() as usize;

    let mut picks: Vec<usize> = Vec::new();
    for k in 0..=steps {
        let t = t0 + k as f64 / fps;
        let after = times.partition_point(|&x| x < t);
        let best = match (after.checked_sub(1), (after < times.len()).then_some(after)) {
            (Some(b), Some(a)) => {
                if t - times[b] <= times[a] - t {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("pack is non-empty"),
        };
        if picks.last().is_none_or(|&p| times[p] < times[best]) {
            picks.push(best);
        }
    }
    if picks.len() < window {
        return Ok(Vec::new());
    }
    Ok(picks
        .windows(window)
        .map(|w| w.iter().map(|&p| frames[p].index).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    BehindCamera,
    OutOfBounds,
    InvalidDepth,
    Occluded { raster_depth: f64, projected_depth: f64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::BehindCamera => f.write_str("behind camera"),
            Rejection::OutOfBounds => f.write_str("projects outside the image"),
            Rejection::InvalidDepth => f.write_str("no valid depth at pixel"),
            Rejection::Occluded {
                raster_depth,
                projected_depth,
            } => write!(f, "occluded (raster {raster_depth} m, center {projected_depth} m)"),
        }
    }
}

/// Projects the object center into `frame` and checks it against the depth
/// raster. Returns the rounded pixel on acceptance.
pub fn select_prompt_pixel(
    obj: &ObjectAnnotation,
    frame: &FrameRecord,
    depth: &DepthRaster,
    tolerance: f64,
) -> std::result::Result<(u32, u32), Rejection> {
    let p = frame.pose.apply_inverse(&obj.center_world);
    let (u, v) = project(&p, &frame.intrinsics).ok_or(Rejection::BehindCamera)?;
    let (u, v) = (u.round(), v.round());
    if !frame.intrinsics.contains_pixel(u, v) {
        return Err(Rejection::OutOfBounds);
    }
    let (u, v) = (u as u32, v as u32);
    let raster_depth = depth.depth_at(u, v).ok_or(Rejection::InvalidDepth)?;
    if (raster_depth - p.z).abs() > tolerance {
        return Err(Rejection::Occluded {
            raster_depth,
            projected_depth: p.z,
        });
    }
    Ok((u, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSample {
    pub scene_id: String,
    pub frame_indices: Vec<usize>,
    pub marked_frame: usize,
    pub pixel: (u32, u32),
    pub label: String,
    /// Quantized to centimeters.
    pub point_first_frame: Vec3,
    /// Before quantization.
    pub point_raw: Vec3,
}

impl SparseSample {
    /// Position of the marked frame within the window.
    pub fn marked_position(&self) -> usize {
        self.frame_indices
            .iter()
            .position(|&i| i == self.marked_frame)
            .expect("marked frame belongs to the window")
    }
}

/// Why an object produced no sample for a window: one rejection per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub rejections: Vec<(usize, Rejection)>,
}

/// Marks the first frame of `window` that accepts the object, back-projects the
/// raster depth at the chosen pixel and expresses the point in the window's
/// first frame.
pub fn make_sparse_sample(
    obj: &ObjectAnnotation,
    window: &[usize],
    scene: &LoadedScene,
    tolerance: f64,
) -> Result<std::result::Result<SparseSample, Skipped>> {
    let first_index = *window
        .first()
        .ok_or_else(|| Error::invalid("window must be non-empty"))?;
    let lookup = |idx: usize| -> Result<(&FrameRecord, &DepthRaster)> {
        let frame = scene
            .pack
            .frame(idx)
            .ok_or_else(|| Error::NotFound(format!("frame {idx} in scene {}", scene.pack.scene_id())))?;
        let depth = scene.depth_for(idx).expect("every frame has a raster");
        Ok((frame, depth))
    };
    let first = lookup(first_index)?.0;

    let mut rejections = Vec::new();
    for &idx in window {
        let (frame, depth) = lookup(idx)?;
        match select_prompt_pixel(obj, frame, depth, tolerance) {
            Ok((u, v)) => {
                let d = depth.depth_at(u, v).expect("accepted pixel has depth");
                let cam = back_project(u as f64, v as f64, d, &frame.intrinsics)?;
                let raw = to_first_frame(&frame.pose.apply(&cam), &first.pose);
                let q = Vec3::new(
                    quantize_metric(raw.x)?,
                    quantize_metric(raw.y)?,
                    quantize_metric(raw.z)?,
                );
                return Ok(Ok(SparseSample {
                    scene_id: scene.pack.scene_id().to_string(),
                    frame_indices: window.to_vec(),
                    marked_frame: idx,
                    pixel: (u, v),
                    label: obj.label.clone(),
                    point_first_frame: q,
                    point_raw: raw,
                }));
            }
            Err(r) => rejections.push((idx, r)),
        }
    }
    Ok(Err(Skipped { rejections }))
}

/// Draws the prompt cross centered at `pixel`: a horizontal and a vertical bar,
/// each `2·CROSS_ARM + CROSS_THICKNESS` long and `CROSS_THICKNESS` wide, clipped
/// to the image.
pub fn mark_pixel(img: &mut RgbImage, pixel: (u32, u32)) -> Result<()> {
    let (w, h) = img.dimensions();
    if pixel.0 >= w || pixel.1 >= h {
        return Err(Error::invalid(format!(
            "pixel ({}, {}) outside {w}x{h} image",
            pixel.0, pixel.1
        )));
    }
    let (u, v) = (pixel.0 as i64, pixel.1 as i64);
    let half_len = CROSS_ARM + CROSS_THICKNESS / 2;
    let half_thick = CROSS_THICKNESS / 2;
    let mut put = |x: i64, y: i64| {
        if (0..w as i64).contains(&x) && (0..h as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, CROSS_COLOR);
        }
    };
    for a in -half_len..=half_len {
        for b in -half_thick..=half_thick {
            put(u + a, v + b);
            put(u + b, v + a);
        }
    }
    Ok(())
}

/// Loads an RGB image, draws the prompt cross and writes it as PNG.
pub fn render_marked_frame(image_path: &Path, pixel: (u32, u32), out_path: &Path) -> Result<()> {
    let mut img = image::open(image_path)
        .map_err(|source| Error::Image {
            path: image_path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    mark_pixel(&mut img, pixel)?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(out_path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: out_path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Gpt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub messages: Vec<Message>,
    /// Unfenced canonical answer.
    pub target: String,
}

pub fn emit_conversation(sample: &SparseSample) -> Result<ConversationRecord> {
    let payload = PromptPayload {
        num_frames: Some(sample.frame_indices.len()),
        marked_frame: Some(sample.marked_position()),
        ..Default::default()
    };
    let answer = PointSemanticPred {
        label: sample.label.clone(),
        pointmap: sample.point_first_frame,
    };
    Ok(ConversationRecord {
        messages: vec![
            Message {
                role: Role::Human,
                text: serialize_prompt(Task::SparsePoint, &payload)?,
            },
            Message {
                role: Role::Gpt,
                text: serialize_point_semantic(&answer),
            },
        ],
        target: point_semantic_body(&answer),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseConfig {
    pub fps: f64,
    pub window: usize,
    pub tolerance: f64,
    /// Accepted samples wanted per window; objects are tried in a seeded order.
    pub samples_per_window: usize,
}

impl Default for SparseConfig {
    fn default() -> Self {
        SparseConfig {
            fps: 1.0,
            window: 4,
            tolerance: DEFAULT_VISIBILITY_TOLERANCE,
            samples_per_window: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSamples {
    pub scene_id: String,
    pub samples: Vec<SparseSample>,
    pub attempted: usize,
    pub skipped: usize,
}

impl SceneSamples {
    pub fn accepted(&self) -> usize {
        self.samples.len()
    }
}

/// Stable per-scene stream derived from the run seed and the scene id.
pub fn scene_rng(seed: u64, scene_id: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in scene_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Generates samples for one scene. For each window, objects are visited in a
/// seeded random order until `samples_per_window` are accepted.
pub fn generate_scene_samples(
    scene: &LoadedScene,
    objects: &[ObjectAnnotation],
    cfg: &SparseConfig,
    seed: u64,
) -> Result<SceneSamples> {
    let scene_id = scene.pack.scene_id().to_string();
    let mut rng = scene_rng(seed, &scene_id);
    let mut out = SceneSamples {
        scene_id,
        samples: Vec::new(),
        attempted: 0,
        skipped: 0,
    };
    let mut order: Vec<usize> = (0..objects.len()).collect();
    for window in sample_frames(&scene.pack, cfg.fps, cfg.window)? {
        order.shuffle(&mut rng);
        let mut accepted = 0;
        for &i in &order {
            if accepted == cfg.samples_per_window {
                break;
            }
            out.attempted += 1;
            match make_sparse_sample(&objects[i], &window, scene, cfg.tolerance)? {
                Ok(s) => {
                    out.samples.push(s);
                    accepted += 1;
                }
                Err(_) => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::CameraIntrinsics;
    use crate::geom::{Pose, Rotation};
    use crate::predparse::parse_point_semantic;
    use std::path::PathBuf;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap()
    }

    fn frame(index: usize, t: f64, pose: Pose) -> FrameRecord {
        FrameRecord {
            index,
            image_ref: PathBuf::from(format!("rgb/{index}.png")),
            depth_ref: PathBuf::from(format!("depth/{index}.u16")),
            pose,
            intrinsics: intr(),
            timestamp: t,
        }
    }

    fn pack_at(times: &[f64]) -> ScenePack {
        let frames = times
            .iter()
            .enumerate()
            .map(|(i, &t)| frame(i, t, Pose::identity()))
            .collect();
        ScenePack::new("s", frames).unwrap()
    }

    fn flat(depth: f64) -> DepthRaster {
        DepthRaster::from_fn(64, 48, |_, _| depth)
    }

    #[test]
    fn uniform_grid_windows() {
        let pack = pack_at(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let w = sample_frames(&pack, 1.0, 4).unwrap();
        assert_eq!(w.len(), 7);
        assert_eq!(w[0], vec![0, 1, 2, 3]);
        assert_eq!(w[6], vec![6, 7, 8, 9]);
        let four = pack_at(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(sample_frames(&four, 1.0, 4).unwrap().len(), 1);
        let short = pack_at(&[0.0, 1.0]);
        assert!(sample_frames(&short, 1.0, 4).unwrap().is_empty());
        assert!(sample_frames(&short, 0.0, 4).is_err());
        assert!(sample_frames(&short, 1.0, 0).is_err());
    }

    #[test]
    fn repeated_timestamps_dropped() {
        let pack = pack_at(&[0.0, 0.0, 0.0, 5.0]);
        let w = sample_frames(&pack, 1.0, 1).unwrap();
        assert_eq!(w, vec![vec![0], vec![3]]);
    }

    #[test]
    fn on_axis_object_accepted() {
        let f = frame(0, 0.0, Pose::identity());
        let obj = ObjectAnnotation::new("chair", Vec3::new(0.0, 0.0, 2.0), None).unwrap();
        assert_eq!(select_prompt_pixel(&obj, &f, &flat(2.0), 0.1), Ok((32, 24)));
        assert!(matches!(
            select_prompt_pixel(&obj, &f, &flat(1.0), 0.1),
            Err(Rejection::Occluded { .. })
        ));
        assert_eq!(
            select_prompt_pixel(&obj, &f, &DepthRaster::from_fn(64, 48, |_, _| 0.0), 0.1),
            Err(Rejection::InvalidDepth)
        );
        let behind = ObjectAnnotation::new("x", Vec3::new(0.0, 0.0, -2.0), None).unwrap();
        assert_eq!(select_prompt_pixel(&behind, &f, &flat(2.0), 0.1), Err(Rejection::BehindCamera));
        let aside = ObjectAnnotation::new("x", Vec3::new(5.0, 0.0, 2.0), None).unwrap();
        assert_eq!(select_prompt_pixel(&aside, &f, &flat(2.0), 0.1), Err(Rejection::OutOfBounds));
    }

    fn scene(frames: Vec<FrameRecord>, depths: Vec<DepthRaster>) -> LoadedScene {
        LoadedScene {
            root: PathBuf::new(),
            pack: ScenePack::new("s", frames).unwrap(),
            depths,
        }
    }

    #[test]
    fn first_frame_marked_on_axis() {
        let frames = (0..4).map(|i| frame(i, i as f64, Pose::identity())).collect();
        let s = scene(frames, vec![flat(2.0); 4]);
        let obj = ObjectAnnotation::new("chair", Vec3::new(0.0, 0.0, 2.0), None).unwrap();
        let sample = make_sparse_sample(&obj, &[0, 1, 2, 3], &s, 0.1).unwrap().unwrap();
        assert_eq!(sample.marked_frame, 0);
        assert_eq!(sample.point_first_frame, Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn second_frame_marked_and_expressed_in_first() {
        let shifted = Pose::new(Rotation::identity(), Vec3::new(0.5, 0.0, 0.0)).unwrap();
        let frames = vec![
            frame(0, 0.0, Pose::identity()),
            frame(1, 1.0, shifted),
        ];
        let s = scene(frames, vec![flat(1.0), flat(2.0)]);
        let obj = ObjectAnnotation::new("lamp", Vec3::new(0.5, 0.0, 2.0), None).unwrap();
        let sample = make_sparse_sample(&obj, &[0, 1], &s, 0.1).unwrap().unwrap();
        assert_eq!(sample.marked_frame, 1);
        assert_eq!(sample.pixel, (32, 24));
        assert!((sample.point_raw - Vec3::new(0.5, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn all_occluded_is_skipped() {
        let frames = (0..4).map(|i| frame(i, i as f64, Pose::identity())).collect();
        let s = scene(frames, vec![flat(1.0); 4]);
        let obj = ObjectAnnotation::new("chair", Vec3::new(0.0, 0.0, 2.0), None).unwrap();
        let skipped = make_sparse_sample(&obj, &[0, 1, 2, 3], &s, 0.1).unwrap().unwrap_err();
        assert_eq!(skipped.rejections.len(), 4);
    }

    #[test]
    fn cross_pixel_count_and_clipping() {
        let mut img = RgbImage::new(100, 100);
        mark_pixel(&mut img, (50, 50)).unwrap();
        let red = img.pixels().filter(|p| **p == CROSS_COLOR).count();
        assert_eq!(red, 27 * 3 * 2 - 3 * 3);
        let again = img.clone();
        mark_pixel(&mut img, (50, 50)).unwrap();
        assert_eq!(img, again);

        let mut corner = RgbImage::new(100, 100);
        mark_pixel(&mut corner, (0, 0)).unwrap();
        let red = corner.pixels().filter(|p| **p == CROSS_COLOR).count();
        // Each bar keeps 14 of 27 along its length and 2 of 3 across.
        assert_eq!(red, 14 * 2 * 2 - 2 * 2);
        assert!(mark_pixel(&mut corner, (100, 0)).is_err());
    }

    #[test]
    fn conversation_matches_answer_grammar() {
        let sample = SparseSample {
            scene_id: "s".into(),
            frame_indices: vec![3, 4, 5, 6],
            marked_frame: 5,
            pixel: (1, 2),
            label: "monitor".into(),
            point_first_frame: Vec3::new(-0.32, -0.54, 1.69),
            point_raw: Vec3::new(-0.32, -0.54, 1.69),
        };
        let rec = emit_conversation(&sample).unwrap();
        assert_eq!(rec.target, r#"{"label": "monitor", "pointmap": [-0.32, -0.54, 1.69]}"#);
        assert!(rec.messages[0].text.starts_with("<image><image><marked_image><image>\n"));
        assert_eq!(rec.messages[0].role, Role::Human);
        assert_eq!(rec.messages[1].role, Role::Gpt);
        let parsed = parse_point_semantic(&rec.messages[1].text).unwrap();
        assert_eq!(parsed.pointmap, sample.point_first_frame);

        let zero = SparseSample {
            label: "chair".into(),
            point_first_frame: Vec3::new(0.0, 0.0, 2.0),
            ..sample
        };
        let rec = emit_conversation(&zero).unwrap();
        assert!(rec.target.ends_with("[0.0, 0.0, 2.0]}"));
    }
}
