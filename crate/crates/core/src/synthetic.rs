//! Procedural scenes with analytic depth: a fronto-parallel back wall at
//! `wall_z` (world), an optional vertical occluding slab in front of it, and
//! labelled boxes whose centers sit on the wall surface. Cameras look down the
//! world +z axis with small yaw and sideways jitter.
//!
//! Used by tests, the acceptance suite and the CLI demo corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::{transform_box, write_scene, CameraIntrinsics, DepthRaster, FrameRecord, LoadedScene, ScenePack};
use crate::geom::{EulerAngles, OrientedBox3, Pose, Rotation, Vec3};
use crate::sparse::{AnnotationEntry, AnnotationFile, ObjectAnnotation};

pub const LABELS: [&str; 8] = [
    "chair", "table", "monitor", "lamp", "sofa", "cabinet", "door", "bookshelf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub num_frames: usize,
    /// Capture rate in frames per second.
    pub capture_hz: f64,
    pub wall_z: f64,
    pub num_objects: usize,
    /// Slab at `z = occluder_z` covering world `x ∈ occluder_x`.
    pub occluder: Option<(f64, [f64; 2])>,
    pub write_images: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            width: 64,
            height: 48,
            focal: 60.0,
            num_frames: 8,
            capture_hz: 1.0,
            wall_z: 4.0,
            num_objects: 6,
            occluder: Some((2.5, [0.3, 0.7])),
            write_images: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene: LoadedScene,
    pub objects: Vec<ObjectAnnotation>,
    pub config: SyntheticConfig,
}

impl SyntheticScene {
    /// Camera-frame depth along the ray through pixel `(u, v)` of `frame`.
    pub fn analytic_depth(&self, frame: &FrameRecord, u: f64, v: f64) -> Option<f64> {
        analytic_depth(&self.config, &frame.pose, &frame.intrinsics, u, v)
    }

    /// Objects with boxes expressed in the camera frame of `frame_index`.
    pub fn boxes_in_frame(&self, frame_index: usize) -> Result<Vec<(String, OrientedBox3)>> {
        let dst = &self
            .scene
            .pack
            .frame(frame_index)
            .ok_or_else(|| Error::NotFound(format!("frame {frame_index}")))?
            .pose;
        self.objects
            .iter()
            .filter_map(|o| o.box_world.map(|b| (o.label.clone(), b)))
            .map(|(l, b)| Ok((l, transform_box(&b, &Pose::identity(), dst)?)))
            .collect()
    }
}

fn analytic_depth(cfg: &SyntheticConfig, pose: &Pose, intr: &CameraIntrinsics, u: f64, v: f64) -> Option<f64> {
    let ray = Vec3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
    let dir = pose.rotation().apply(&ray);
    let origin = pose.translation();
    if dir.z <= 0.0 {
        return None;
    }
    // Camera depth equals the ray parameter since the ray has unit z in camera frame.
    let hit = |z: f64| (z - origin.z) / dir.z;
    let mut depth = hit(cfg.wall_z);
    if let Some((oz, [x0, x1])) = cfg.occluder {
        let s = hit(oz);
        let x = origin.x + s * dir.x;
        if s > 0.0 && (x0..=x1).contains(&x) {
            depth = depth.min(s);
        }
    }
    (depth > 0.0).then_some(depth)
}

fn render_image(cfg: &SyntheticConfig, depth: &DepthRaster) -> RgbImage {
    RgbImage::from_fn(cfg.width, cfg.height, |u, v| {
        let d = depth.depth_at(u, v).unwrap_or(0.0);
        let shade = (255.0 * (1.0 - d / (cfg.wall_z + 1.0))).clamp(0.0, 255.0) as u8;
        Rgb([shade, shade, (shade / 2).saturating_add(64)])
    })
}

/// Builds one scene in memory.
pub fn generate_scene(scene_id: &str, cfg: &SyntheticConfig, rng: &mut impl Rng) -> Result<SyntheticScene> {
    if cfg.num_frames == 0 || !(cfg.capture_hz > 0.0) {
        return Err(Error::invalid("synthetic scene needs frames and a positive capture rate"));
    }
    let intr = CameraIntrinsics::new(
        cfg.focal,
        cfg.focal,
        cfg.width as f64 / 2.0,
        cfg.height as f64 / 2.0,
        cfg.width,
        cfg.height,
    )?;
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut depths = Vec::with_capacity(cfg.num_frames);
    for i in 0..cfg.num_frames {
        let yaw = rng.random_range(-0.15..0.15);
        let t = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1), rng.random_range(-0.2..0.2));
        let pose = Pose::new(Rotation::about_y(yaw), t)?;
        let depth = DepthRaster::from_fn(cfg.width, cfg.height, |u, v| {
            analytic_depth(cfg, &pose, &intr, u as f64, v as f64).unwrap_or(0.0)
        });
        frames.push(FrameRecord {
            index: i,
            image_ref: PathBuf::from(format!("rgb/{i:06}.png")),
            depth_ref: PathBuf::from(format!("depth/{i:06}.u16")),
            pose,
            intrinsics: intr,
            timestamp: i as f64 / cfg.capture_hz,
        });
        depths.push(depth);
    }
    let objects = (0..cfg.num_objects)
        .map(|k| {
            let center = Vec3::new(rng.random_range(-1.2..1.2), rng.random_range(-0.7..0.7), cfg.wall_z);
            let size = Vec3::new(
                rng.random_range(0.3..0.9),
                rng.random_range(0.3..0.9),
                rng.random_range(0.3..0.9),
            );
            let b = OrientedBox3::new(center, size, EulerAngles::new(rng.random_range(-1.0..1.0), 0.0, 0.0))?;
            ObjectAnnotation::new(LABELS[k % LABELS.len()], center, Some(b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticScene {
        scene: LoadedScene {
            root: PathBuf::new(),
            pack: ScenePack::new(scene_id, frames)?,
            depths,
        },
        objects,
        config: cfg.clone(),
    })
}

/// Writes a scene pack (and RGB renders when enabled) under `dir`.
pub fn write_synthetic_scene(dir: &Path, s: &SyntheticScene) -> Result<()> {
    write_scene(dir, &s.scene.pack, &s.scene.depths)?;
    if s.config.write_images {
        for (f, d) in s.scene.pack.frames().iter().zip(&s.scene.depths) {
            let path = dir.join(&f.image_ref);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            render_image(&s.config, d)
                .save(&path)
                .map_err(|source| Error::Image { path: path.clone(), source })?;
        }
    }
    Ok(())
}

/// Writes `num_scenes` scenes under `root/<scene_id>/` plus `root/annotations.json`.
pub fn write_corpus(root: &Path, num_scenes: usize, cfg: &SyntheticConfig, seed: u64) -> Result<Vec<SyntheticScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut annotations = AnnotationFile::new();
    let mut scenes = Vec::with_capacity(num_scenes);
    for k in 0..num_scenes {
        let id = format!("scene{k:04}");
        let mut s = generate_scene(&id, cfg, &mut rng)?;
        let dir = root.join(&id);
        write_synthetic_scene(&dir, &s)?;
        s.scene.root = dir;
        annotations.insert(id, s.objects.iter().map(AnnotationEntry::from_annotation).collect());
        scenes.push(s);
    }
    let path = root.join("annotations.json");
    let text = serde_json::to_string_pretty(&annotations).expect("annotations serialize");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(scenes)
}

/// Scene id → objects, as read back by [`crate::sparse::read_annotations`].
pub fn annotation_map(scenes: &[SyntheticScene]) -> BTreeMap<String, Vec<ObjectAnnotation>> {
    scenes
        .iter()
        .map(|s| (s.scene.pack.scene_id().to_string(), s.objects.clone()))
        .collect()
}
