use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::depth::DepthRaster;
use crate::error::{Error, Result};
use crate::geom::Pose;

/// Rotation tolerance accepted when reading poses from disk; the rotation block
/// is then projected exactly onto SO(3).
pub const POSE_FILE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::invalid(format!(
                "cx = {} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid(format!(
                "cy = {} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Continuous pixel bounds `[0, width) × [0, height)`.
    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub image_ref: PathBuf,
    pub depth_ref: PathBuf,
    /// Camera-to-world.
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub timestamp: f64,
}

/// Posed RGB-D frame sequence of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePack {
    scene_id: String,
    frames: Vec<FrameRecord>,
}

impl ScenePack {
    /// Requires at least one frame, unique frame indices and non-decreasing timestamps.
    pub fn new(scene_id: impl Into<String>, frames: Vec<FrameRecord>) -> Result<Self> {
        let scene_id = scene_id.into();
        if frames.is_empty() {
            return Err(Error::invalid(format!("scene {scene_id} has no frames")));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &frames {
            if !seen.insert(f.index) {
                return Err(Error::invalid(format!(
                    "scene {scene_id}: duplicate frame index {}",
                    f.index
                )));
            }
            if !f.timestamp.is_finite() {
                return Err(Error::invalid(format!(
                    "scene {scene_id}: frame {} has non-finite timestamp",
                    f.index
                )));
            }
            f.intrinsics.validate()?;
        }
        if frames.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::invalid(format!(
                "scene {scene_id}: timestamps must be non-decreasing"
            )));
        }
        Ok(ScenePack { scene_id, frames })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.index == index)
    }

    pub fn position_of(&self, index: usize) -> Option<usize> {
        self.frames.iter().position(|f| f.index == index)
    }

    pub fn first(&self) -> &FrameRecord {
        &self.frames[0]
    }
}

/// Moves the frame with index `anchor_index` to the front; the remaining frames
/// keep their relative order. The result's first frame defines the coordinate
/// system, so its timestamps are no longer monotone in general.
pub fn reorder_anchor(pack: &ScenePack, anchor_index: usize) -> Result<ScenePack> {
    let pos = pack.position_of(anchor_index).ok_or_else(|| {
        Error::NotFound(format!(
            "frame {anchor_index} not in scene {}",
            pack.scene_id
        ))
    })?;
    let mut frames = Vec::with_capacity(pack.frames.len());
    frames.push(pack.frames[pos].clone());
    frames.extend(
        pack.frames
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, f)| f.clone()),
    );
    Ok(ScenePack {
        scene_id: pack.scene_id.clone(),
        frames,
    })
}

/// `scene.json` layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene_id: String,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    pub image: PathBuf,
    pub depth: PathBuf,
    /// Row-major 4×4 camera-to-world matrix.
    pub pose: Vec<f64>,
    pub intrinsics: CameraIntrinsics,
    pub timestamp: f64,
}

impl FrameEntry {
    pub fn from_record(f: &FrameRecord) -> Self {
        FrameEntry {
            index: f.index,
            image: f.image_ref.clone(),
            depth: f.depth_ref.clone(),
            pose: f.pose.to_row_major_4x4().to_vec(),
            intrinsics: f.intrinsics,
            timestamp: f.timestamp,
        }
    }
}

/// A scene pack loaded from disk together with its depth rasters (one per frame,
/// in frame order).
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub root: PathBuf,
    pub pack: ScenePack,
    pub depths: Vec<DepthRaster>,
}

impl LoadedScene {
    pub fn depth_for(&self, frame_index: usize) -> Option<&DepthRaster> {
        self.pack.position_of(frame_index).map(|i| &self.depths[i])
    }
}

pub const SCENE_FILE: &str = "scene.json";

pub fn read_scene_file(dir: &Path) -> Result<SceneFile> {
    let path = dir.join(SCENE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(&path, e.to_string()))
}

/// Reads `scene.json` and builds a validated pack (depth rasters not loaded).
pub fn load_scene_pack(dir: &Path) -> Result<ScenePack> {
    let file = read_scene_file(dir)?;
    let path = dir.join(SCENE_FILE);
    let frames = file
        .frames
        .into_iter()
        .map(|e| {
            let pose = Pose::from_row_major_4x4(&e.pose, POSE_FILE_TOLERANCE)
                .map_err(|err| Error::schema(&path, format!("frame {}: {err}", e.index)))?;
            Ok(FrameRecord {
                index: e.index,
                image_ref: e.image,
                depth_ref: e.depth,
                pose,
                intrinsics: e.intrinsics,
                timestamp: e.timestamp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScenePack::new(file.scene_id, frames).map_err(|e| Error::schema(&path, e.to_string()))
}

/// Loads the pack and every depth raster, checking raster size against intrinsics.
pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let pack = load_scene_pack(dir)?;
    let depths = pack
        .frames()
        .iter()
        .map(|f| {
            let raster = DepthRaster::read(&dir.join(&f.depth_ref))?;
            if raster.width() != f.intrinsics.width || raster.height() != f.intrinsics.height {
                return Err(Error::schema(
                    dir.join(&f.depth_ref),
                    format!(
                        "depth raster is {}x{} but intrinsics say {}x{}",
                        raster.width(),
                        raster.height(),
                        f.intrinsics.width,
                        f.intrinsics.height
                    ),
                ));
            }
            Ok(raster)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedScene {
        root: dir.to_path_buf(),
        pack,
        depths,
    })
}

/// Writes `scene.json` (pretty-printed) and every raster under `dir`.
pub fn write_scene(dir: &Path, pack: &ScenePack, depths: &[DepthRaster]) -> Result<()> {
    if depths.len() != pack.frames().len() {
        return Err(Error::invalid("one depth raster per frame required"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = SceneFile {
        scene_id: pack.scene_id().to_string(),
        frames: pack.frames().iter().map(FrameEntry::from_record).collect(),
    };
    let path = dir.join(SCENE_FILE);
    let text = serde_json::to_string_pretty(&file).expect("scene file serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    for (f, d) in pack.frames().iter().zip(depths) {
        d.write(&dir.join(&f.depth_ref))?;
    }
    Ok(())
}

/// Immediate subdirectories of `root` that contain a `scene.json`, sorted by name.
pub fn discover_scenes(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    if root.join(SCENE_FILE).is_file() {
        dirs.push(root.to_path_buf());
        return Ok(dirs);
    }
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let p = entry.path();
        if p.is_dir() && p.join(SCENE_FILE).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}
