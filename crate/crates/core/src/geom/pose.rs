use nalgebra::{Matrix3, Matrix4};

use super::rotation::{Rotation, Vec3};
use crate::error::{Error, Result};

/// Rigid camera-to-world transform: `p_world = R * p_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Rotation,
    translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose translation must be finite"));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Parses a row-major 4×4 homogeneous matrix. The rotation block is accepted
    /// within `tol` of SO(3) and then projected onto it exactly.
    pub fn from_row_major_4x4(values: &[f64], tol: f64) -> Result<Self> {
        if values.len() != 16 {
            return Err(Error::invalid(format!(
                "pose needs 16 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        let bottom = &values[12..16];
        if bottom[0].abs() > tol || bottom[1].abs() > tol || bottom[2].abs() > tol {
            return Err(Error::invalid("pose bottom row must be [0, 0, 0, 1]"));
        }
        if (bottom[3] - 1.0).abs() > tol {
            return Err(Error::invalid("pose bottom row must be [0, 0, 0, 1]"));
        }
        let m = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        Rotation::from_matrix_with_tolerance(m, tol)?;
        let rotation = Rotation::nearest(m)?;
        Pose::new(rotation, Vec3::new(values[3], values[7], values[11]))
    }

    pub fn to_row_major_4x4(&self) -> [f64; 16] {
        let r = self.rotation.to_row_major();
        let t = &self.translation;
        [
            r[0], r[1], r[2], t.x, r[3], r[4], r[5], t.y, r[6], r[7], r[8], t.z, 0.0, 0.0, 0.0,
            1.0,
        ]
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.to_row_major_4x4())
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera point to world point.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// World point to camera point: `Rᵀ (p - t)`.
    pub fn apply_inverse(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose().apply(&(p - self.translation))
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -rt.apply(&self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }
}
