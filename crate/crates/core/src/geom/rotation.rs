use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Orthonormality and determinant tolerance for [`Rotation`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Yaw/pitch/roll in radians.
///
/// Composition is intrinsic Z-Y-X: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles {
        yaw: 0.0,
        pitch: 0.0,
        roll: 0.0,
    };

    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        EulerAngles { yaw, pitch, roll }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()
    }

    /// Each angle wrapped into (-π, π].
    pub fn normalized(&self) -> Self {
        EulerAngles {
            yaw: normalize_angle(self.yaw),
            pitch: normalize_angle(self.pitch),
            roll: normalize_angle(self.roll),
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }
}

/// Wraps an angle into (-π, π]. Values already in range are returned untouched.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// A proper rotation matrix (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Checks orthonormality and determinant within [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        Self::from_matrix_with_tolerance(m, ROTATION_TOLERANCE)
    }

    pub fn from_matrix_with_tolerance(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        if ortho > tol {
            return Err(Error::invalid(format!(
                "rotation matrix is not orthonormal (max |RᵀR - I| = {ortho:e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::invalid(format!(
                "rotation matrix determinant is {det}, expected +1"
            )));
        }
        Ok(Rotation(m))
    }

    /// Projects a nearly-orthonormal matrix onto SO(3) via SVD.
    pub fn nearest(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Numerical("SVD did not converge".into())),
        };
        let d = (u * v_t).determinant().signum();
        let r = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
        Self::from_matrix(r)
    }

    pub fn from_euler(angles: EulerAngles) -> Result<Self> {
        euler_to_rotation(angles)
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Z-Y-X angles reproducing this matrix. At gimbal lock (|pitch| = π/2) roll is set to 0.
    pub fn to_euler(&self) -> EulerAngles {
        let m = &self.0;
        let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
        let pitch = (-m[(2, 0)]).atan2(cos_pitch);
        if cos_pitch > 1e-12 {
            EulerAngles {
                yaw: m[(1, 0)].atan2(m[(0, 0)]),
                pitch,
                roll: m[(2, 1)].atan2(m[(2, 2)]),
            }
        } else {
            // Only yaw - sign(pitch)·roll is observable here.
            EulerAngles {
                yaw: (-m[(0, 1)]).atan2(m[(1, 1)]),
                pitch,
                roll: 0.0,
            }
        }
    }

    pub fn frobenius_distance(&self, other: &Rotation) -> f64 {
        (self.0 - other.0).norm()
    }
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_to_rotation(angles: EulerAngles) -> Result<Rotation> {
    if !angles.is_finite() {
        return Err(Error::invalid(format!(
            "Euler angles must be finite, got {angles:?}"
        )));
    }
    let rz = Rotation::about_z(angles.yaw);
    let ry = Rotation::about_y(angles.pitch);
    let rx = Rotation::about_x(angles.roll);
    Ok(rz.compose(&ry).compose(&rx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_angles_give_identity() {
        let r = euler_to_rotation(EulerAngles::ZERO).unwrap();
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let r = euler_to_rotation(EulerAngles::new(FRAC_PI_2, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r.apply(&Vec3::x()), Vec3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.apply(&Vec3::y()), -Vec3::x(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.apply(&Vec3::z()), Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn composition_matches_elementary_product() {
        let a = EulerAngles::new(0.3, -0.2, 1.1);
        let r = euler_to_rotation(a).unwrap();
        // Independent elementary matrices written out by hand.
        let (sy, cy) = 0.3f64.sin_cos();
        let (sp, cp) = (-0.2f64).sin_cos();
        let (sr, cr) = 1.1f64.sin_cos();
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        assert_abs_diff_eq!(*r.matrix(), rz * ry * rx, epsilon = 1e-15);
        let m = r.matrix();
        assert_abs_diff_eq!(m.transpose() * m, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_angles_rejected() {
        assert!(euler_to_rotation(EulerAngles::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(euler_to_rotation(EulerAngles::new(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn gimbal_lock_round_trip() {
        for pitch in [FRAC_PI_2, -FRAC_PI_2] {
            let r = euler_to_rotation(EulerAngles::new(0.4, pitch, -0.7)).unwrap();
            let back = euler_to_rotation(r.to_euler()).unwrap();
            assert!(r.frobenius_distance(&back) < 1e-12);
        }
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_abs_diff_eq!(normalize_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(normalize_angle(3.5), 3.5 - 2.0 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(normalize_angle(7.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(normalize_angle(-3.07), -3.07);
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Rotation::from_matrix(m).is_err());
    }

    proptest::proptest! {
        #[test]
        fn euler_round_trip(yaw in -10.0f64..10.0, pitch in -10.0f64..10.0, roll in -10.0f64..10.0) {
            let r = euler_to_rotation(EulerAngles::new(yaw, pitch, roll)).unwrap();
            let m = r.matrix();
            proptest::prop_assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-12);
            proptest::prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            let back = euler_to_rotation(r.to_euler()).unwrap();
            proptest::prop_assert!(r.frobenius_distance(&back) < 1e-12);
        }
    }
}
