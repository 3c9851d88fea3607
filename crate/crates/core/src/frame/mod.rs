//! First-frame metric coordinate convention.
//!
//! Poses are camera-to-world. Every model-facing quantity is expressed in the
//! camera frame of the first frame of its sequence and rounded to centimeters.
//!
//! On-disk scene pack layout:
//!
//! ```text
//! <scene>/scene.json            {"scene_id", "frames": [{"index", "image", "depth",
//!                                 "pose": [16 values, row-major 4x4 camera-to-world],
//!                                 "intrinsics": {"fx","fy","cx","cy","width","height"},
//!                                 "timestamp"}]}
//! <scene>/<depth>.u16           little-endian u16, row-major, 0 = invalid
//! <scene>/<depth>.json          {"width", "height", "depth_scale"}
//! ```

mod canon;
mod depth;
mod scene;

pub use canon::{
    back_project, format_metric, format_number, project, quantize_metric, to_first_frame,
    transform_box,
};
pub use depth::{read_header, sidecar_path, DepthHeader, DepthRaster};
pub use scene::{
    discover_scenes, load_scene, load_scene_pack, read_scene_file, reorder_anchor, write_scene,
    CameraIntrinsics, FrameEntry, FrameRecord, LoadedScene, SceneFile, ScenePack,
    POSE_FILE_TOLERANCE, SCENE_FILE,
};
