//! Rotations, rigid and similarity transforms, and oriented 3D boxes.
//!
//! Angles follow the intrinsic Z-Y-X (yaw, pitch, roll) convention everywhere:
//! `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.

mod iou;
mod obb;
mod pose;
mod rotation;
mod sim3;

pub use iou::{box_iou, box_iou_mc, intersection_volume, CLIP_EPSILON};
pub use obb::{box_corners, OrientedBox3};
pub use pose::Pose;
pub use rotation::{
    euler_to_rotation, normalize_angle, EulerAngles, Rotation, Vec3, ROTATION_TOLERANCE,
};
pub use sim3::{umeyama_sim3, Sim3};

/// Applies a rigid transform to a box: center is mapped, orientation composed.
pub fn transform_box_rigid(b: &OrientedBox3, t: &Pose) -> crate::Result<OrientedBox3> {
    let rotation = t.rotation().compose(b.rotation());
    OrientedBox3::new(t.apply(b.center()), *b.size(), rotation.to_euler())
}
