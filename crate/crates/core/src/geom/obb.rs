use super::rotation::{euler_to_rotation, EulerAngles, Rotation, Vec3};
use crate::error::{Error, Result};

/// 9-DoF metric box: center, full extents `(w, h, d)` along the local x/y/z
/// axes, and Z-Y-X Euler orientation.
///
/// Sizes are strictly positive; a box cannot be constructed otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3 {
    center: Vec3,
    size: Vec3,
    angles: EulerAngles,
    rotation: Rotation,
}

impl OrientedBox3 {
    pub fn new(center: Vec3, size: Vec3, angles: EulerAngles) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("box center must be finite"));
        }
        if !size.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid(format!(
                "box sizes must be finite and strictly positive, got ({}, {}, {})",
                size.x, size.y, size.z
            )));
        }
        let rotation = euler_to_rotation(angles)?;
        Ok(OrientedBox3 {
            center,
            size,
            angles,
            rotation,
        })
    }

    pub fn axis_aligned(center: Vec3, size: Vec3) -> Result<Self> {
        Self::new(center, size, EulerAngles::ZERO)
    }

    /// Decodes `[x, y, z, w, h, d, yaw, pitch, roll]`.
    pub fn from_array(v: &[f64; 9]) -> Result<Self> {
        Self::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            EulerAngles::new(v[6], v[7], v[8]),
        )
    }

    pub fn to_array(&self) -> [f64; 9] {
        let (c, s, a) = (&self.center, &self.size, &self.angles);
        [c.x, c.y, c.z, s.x, s.y, s.z, a.yaw, a.pitch, a.roll]
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn size(&self) -> &Vec3 {
        &self.size
    }

    pub fn angles(&self) -> &EulerAngles {
        &self.angles
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn half_extents(&self) -> Vec3 {
        self.size * 0.5
    }

    /// Same box with angles wrapped into (-π, π]. The rotation is unchanged.
    pub fn normalized(&self) -> Self {
        OrientedBox3 {
            angles: self.angles.normalized(),
            ..*self
        }
    }

    /// Eight corners. Corner `i` uses local signs
    /// `(bit0 ? + : -, bit1 ? + : -, bit2 ? + : -)` on `(w/2, h/2, d/2)`,
    /// so index 0 is `(-,-,-)` and index 7 is `(+,+,+)`.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents();
        std::array::from_fn(|i| {
            let local = Vec3::new(
                if i & 1 != 0 { h.x } else { -h.x },
                if i & 2 != 0 { h.y } else { -h.y },
                if i & 4 != 0 { h.z } else { -h.z },
            );
            self.rotation.apply(&local) + self.center
        })
    }

    /// Inclusive point-in-box test.
    pub fn contains(&self, p: &Vec3) -> bool {
        let local = self.rotation.transpose().apply(&(p - self.center));
        let h = self.half_extents();
        local.x.abs() <= h.x && local.y.abs() <= h.y && local.z.abs() <= h.z
    }

    /// Axis-aligned bounds `(min, max)` of the corners.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let m = self.rotation.matrix();
        let h = self.half_extents();
        let ext = Vec3::from_fn(|r, _| {
            m[(r, 0)].abs() * h.x + m[(r, 1)].abs() * h.y + m[(r, 2)].abs() * h.z
        });
        (self.center - ext, self.center + ext)
    }

    pub fn circumradius(&self) -> f64 {
        self.half_extents().norm()
    }
}

/// Corners of `b`; free-function form of [`OrientedBox3::corners`].
pub fn box_corners(b: &OrientedBox3) -> [Vec3; 8] {
    b.corners()
}
