use crate::error::{Error, Result};
use crate::geom::{OrientedBox3, Pose, Vec3};

use super::scene::CameraIntrinsics;

/// Expresses a world point in the camera frame of `first` (a camera-to-world pose).
pub fn to_first_frame(point_world: &Vec3, first: &Pose) -> Vec3 {
    first.apply_inverse(point_world)
}

/// Re-expresses a box given in the `src` camera frame in the `dst` camera frame.
/// Both poses are camera-to-world.
pub fn transform_box(b: &OrientedBox3, src: &Pose, dst: &Pose) -> Result<OrientedBox3> {
    let relative = dst.inverse().compose(src);
    crate::geom::transform_box_rigid(b, &relative)
}

/// Pinhole back-projection of a pixel with metric depth into the camera frame.
pub fn back_project(u: f64, v: f64, depth: f64, intr: &CameraIntrinsics) -> Result<Vec3> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::invalid(format!("depth must be positive, got {depth}")));
    }
    if !intr.contains_pixel(u, v) {
        return Err(Error::invalid(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            intr.width, intr.height
        )));
    }
    Ok(Vec3::new(
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ))
}

/// Pinhole projection of a camera-frame point; `None` when the point is not in
/// front of the camera.
pub fn project(p: &Vec3, intr: &CameraIntrinsics) -> Option<(f64, f64)> {
    if !(p.z > 0.0) {
        return None;
    }
    Some((intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy))
}

/// Rounds to two decimals, half away from zero, on the shortest decimal
/// representation of `value` (so `1.005` rounds to `1.01`). Negative zero is
/// normalized to `0.0`.
pub fn quantize_metric(value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("cannot quantize non-finite value {value}")));
    }
    let text = format!("{value}");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let mut frac: Vec<u8> = frac_part.bytes().collect();
    frac.resize(frac.len().max(3), b'0');

    let mut hundredths: u128 = int_part
        .parse::<u128>()
        .map_err(|_| Error::invalid(format!("value {value} too large to quantize")))?
        .checked_mul(100)
        .ok_or_else(|| Error::invalid(format!("value {value} too large to quantize")))?;
    hundredths += u128::from(frac[0] - b'0') * 10 + u128::from(frac[1] - b'0');
    if frac[2] >= b'5' {
        hundredths += 1;
    }
    let magnitude = hundredths as f64 / 100.0;
    Ok(if negative && hundredths != 0 {
        -magnitude
    } else {
        magnitude
    })
}

/// Quantizes and renders with trailing zeros suppressed (`2.70` → `"2.7"`,
/// `2` → `"2.0"`).
pub fn format_metric(value: f64) -> Result<String> {
    Ok(format_number(quantize_metric(value)?))
}

/// Shortest round-trip decimal rendering, always with a fractional part and
/// never a negative zero. Used for every number written into model-facing JSON.
pub fn format_number(value: f64) -> String {
    let v = if value == 0.0 { 0.0 } else { value };
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) || !v.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{EulerAngles, Rotation};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn identity_first_frame() {
        let p = Vec3::new(1.0, -2.0, 3.0);
        assert_eq!(to_first_frame(&p, &Pose::identity()), p);
    }

    #[test]
    fn camera_origin_maps_to_origin() {
        let pose = Pose::new(Rotation::about_x(0.3), Vec3::new(4.0, 5.0, 6.0)).unwrap();
        assert_abs_diff_eq!(
            to_first_frame(pose.translation(), &pose),
            Vec3::zeros(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quarter_turn_first_frame() {
        // Hand computation: p - t = (0, 1, 0); Rz(π/2)ᵀ maps +y to +x.
        let pose = Pose::new(Rotation::about_z(FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let q = to_first_frame(&Vec3::new(1.0, 1.0, 0.0), &pose);
        assert_abs_diff_eq!(q, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(pose.apply(&q), Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn transform_box_same_pose_is_identity() {
        let b = OrientedBox3::new(
            Vec3::new(0.1, 0.2, 2.0),
            Vec3::new(0.5, 0.6, 0.7),
            EulerAngles::new(0.3, -0.2, 0.1),
        )
        .unwrap();
        let pose = Pose::new(Rotation::about_y(0.5), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let out = transform_box(&b, &pose, &pose).unwrap();
        assert_abs_diff_eq!(*out.center(), *b.center(), epsilon = 1e-12);
        assert_abs_diff_eq!(out.angles().yaw, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(out.angles().pitch, -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.angles().roll, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn transform_box_pure_translation() {
        let b = OrientedBox3::new(
            Vec3::new(0.1, 0.2, 2.0),
            Vec3::new(0.5, 0.6, 0.7),
            EulerAngles::new(0.3, -0.2, 0.1),
        )
        .unwrap();
        let src = Pose::new(Rotation::identity(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let dst = Pose::identity();
        let out = transform_box(&b, &src, &dst).unwrap();
        assert_abs_diff_eq!(*out.center(), Vec3::new(1.1, 0.2, 2.0), epsilon = 1e-12);
        assert_abs_diff_eq!(out.angles().yaw, 0.3, epsilon = 1e-12);
        assert_eq!(out.size(), b.size());
    }

    #[test]
    fn back_project_examples() {
        assert_eq!(back_project(320.0, 240.0, 2.0, &intr()).unwrap(), Vec3::new(0.0, 0.0, 2.0));
        assert_abs_diff_eq!(
            back_project(820.0, 240.0, 1.0, &CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 1000, 480).unwrap())
                .unwrap(),
            Vec3::new(1.0, 0.0, 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn back_project_errors() {
        assert!(back_project(10.0, 10.0, 0.0, &intr()).is_err());
        assert!(back_project(10.0, 10.0, -1.0, &intr()).is_err());
        assert!(back_project(640.0, 10.0, 1.0, &intr()).is_err());
        assert!(back_project(-0.5, 10.0, 1.0, &intr()).is_err());
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_metric(1.005).unwrap(), 1.01);
        assert_eq!(quantize_metric(-1.005).unwrap(), -1.01);
        let z = quantize_metric(-0.004999).unwrap();
        assert_eq!(z, 0.0);
        assert!(z.is_sign_positive());
        assert_eq!(format_metric(-0.004999).unwrap(), "0.0");
        assert_eq!(quantize_metric(2.70).unwrap(), 2.7);
        assert_eq!(format_metric(2.70).unwrap(), "2.7");
        assert_eq!(format_metric(2.0).unwrap(), "2.0");
        assert_eq!(format_metric(-0.324).unwrap(), "-0.32");
        assert_eq!(format_metric(0.995).unwrap(), "1.0");
        assert!(quantize_metric(f64::NAN).is_err());
        assert!(quantize_metric(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn back_project_round_trip(u in 0.0f64..639.99, v in 0.0f64..479.99, d in 0.05f64..20.0) {
            let p = back_project(u, v, d, &intr()).unwrap();
            let (pu, pv) = project(&p, &intr()).unwrap();
            prop_assert!((pu - u).abs() <= 1e-9 && (pv - v).abs() <= 1e-9);
        }

        #[test]
        fn quantize_idempotent_and_two_digits(x in -1.0e6f64..1.0e6) {
            let q = quantize_metric(x).unwrap();
            prop_assert_eq!(quantize_metric(q).unwrap(), q);
            prop_assert!((q - x).abs() <= 0.005 + 1e-9 * x.abs().max(1.0));
            let s = format_number(q);
            let frac = s.split_once('.').map(|(_, f)| f.len()).unwrap_or(0);
            prop_assert!(frac <= 2, "{}", s);
        }

        #[test]
        fn first_frame_round_trip(a in prop::array::uniform3(-3.2f64..3.2),
                                  t in prop::array::uniform3(-10.0f64..10.0),
                                  p in prop::array::uniform3(-10.0f64..10.0)) {
            let pose = Pose::new(
                crate::geom::euler_to_rotation(EulerAngles::new(a[0], a[1], a[2])).unwrap(),
                Vec3::from(t),
            ).unwrap();
            let p = Vec3::from(p);
            let back = pose.apply(&to_first_frame(&p, &pose));
            prop_assert!((back - p).amax() <= 1e-12 * p.amax().max(1.0) * 10.0);
        }

        #[test]
        fn box_transport_matches_corner_transport(
            a in prop::array::uniform3(-3.2f64..3.2),
            c in prop::array::uniform3(-3.0f64..3.0),
            s in prop::array::uniform3(0.1f64..2.0),
            ra in prop::array::uniform3(-3.2f64..3.2),
            rt in prop::array::uniform3(-5.0f64..5.0),
            da in prop::array::uniform3(-3.2f64..3.2),
            dt in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let b = OrientedBox3::new(Vec3::from(c), Vec3::from(s), EulerAngles::new(a[0], a[1], a[2])).unwrap();
            let mk = |a: [f64; 3], t: [f64; 3]| Pose::new(
                crate::geom::euler_to_rotation(EulerAngles::new(a[0], a[1], a[2])).unwrap(),
                Vec3::from(t),
            ).unwrap();
            let (src, dst) = (mk(ra, rt), mk(da, dt));
            let out = transform_box(&b, &src, &dst).unwrap();
            let moved: Vec<Vec3> = b.corners().iter().map(|p| dst.apply_inverse(&src.apply(p))).collect();
            for (x, y) in out.corners().iter().zip(&moved) {
                prop_assert!((x - y).amax() <= 1e-9);
            }
        }
    }
}
