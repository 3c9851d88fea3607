use nalgebra::Matrix3;

use super::rotation::{Rotation, Vec3};
use crate::error::{Error, Result};

/// Similarity transform `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    scale: f64,
    rotation: Rotation,
    translation: Vec3,
}

impl Sim3 {
    pub fn new(scale: f64, rotation: Rotation, translation: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!(
                "Sim(3) scale must be positive and finite, got {scale}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("Sim(3) translation must be finite"));
        }
        Ok(Sim3 {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Sim3 {
            scale: 1.0,
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * self.rotation.apply(p) + self.translation
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

/// Least-squares similarity transform mapping `source` onto `target`
/// (minimizes `Σ ‖s·R·pᵢ + t − qᵢ‖²`), closed form via the SVD of the centered
/// cross-covariance with the usual determinant sign correction.
pub fn umeyama_sim3(source: &[Vec3], target: &[Vec3]) -> Result<Sim3> {
    if source.len() != target.len() {
        return Err(Error::invalid(format!(
            "point sets differ in size ({} vs {})",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "Sim(3) alignment needs at least 3 correspondences, got {n}"
        )));
    }
    if source.iter().chain(target).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("point sets contain non-finite coordinates"));
    }

    let inv_n = 1.0 / n as f64;
    let mu_src = source.iter().sum::<Vec3>() * inv_n;
    let mu_tgt = target.iter().sum::<Vec3>() * inv_n;

    let mut sigma = Matrix3::zeros();
    let mut var_src = 0.0;
    for (p, q) in source.iter().zip(target) {
        let dp = p - mu_src;
        let dq = q - mu_tgt;
        sigma += dq * dp.transpose();
        var_src += dp.norm_squared();
    }
    sigma *= inv_n;
    var_src *= inv_n;

    let extent = source
        .iter()
        .map(|p| p.amax())
        .fold(0.0f64, f64::max)
        .max(1.0);
    if var_src <= f64::EPSILON * extent * extent {
        return Err(Error::Degenerate("source points have zero variance".into()));
    }

    let svd = sigma.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not converge".into())),
    };
    let mut s = Vec3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        s.z = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&s) * v_t;
    let rotation = Rotation::from_matrix(r)?;
    let scale = svd.singular_values.dot(&s) / var_src;
    if !(scale > 0.0) {
        return Err(Error::Degenerate(format!(
            "alignment produced non-positive scale {scale}"
        )));
    }
    let translation = mu_tgt - scale * rotation.apply(&mu_src);
    Sim3::new(scale, rotation, translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn identity_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 10);
        let sim = umeyama_sim3(&pts, &pts).unwrap();
        assert_abs_diff_eq!(sim.scale(), 1.0, epsilon = 1e-12);
        assert!(sim.rotation().frobenius_distance(&Rotation::identity()) < 1e-12);
        assert!(sim.translation().norm() < 1e-12);
    }

    #[test]
    fn recovers_constructed_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = random_points(&mut rng, 50);
        let truth = Sim3::new(2.0, Rotation::about_z(FRAC_PI_2), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let tgt = truth.apply_all(&src);
        let sim = umeyama_sim3(&src, &tgt).unwrap();
        assert!((sim.scale() - 2.0).abs() < 1e-9);
        assert!(sim.rotation().frobenius_distance(truth.rotation()) < 1e-9);
        assert!((sim.translation() - truth.translation()).norm() < 1e-9);
    }

    #[test]
    fn reflected_target_still_gives_proper_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_points(&mut rng, 20);
        let tgt: Vec<Vec3> = src.iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
        let sim = umeyama_sim3(&src, &tgt).unwrap();
        assert_abs_diff_eq!(sim.rotation().matrix().determinant(), 1.0, epsilon = 1e-12);
        assert!(sim.scale() > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        let p = vec![Vec3::new(1.0, 1.0, 1.0); 5];
        assert!(matches!(umeyama_sim3(&p, &p), Err(Error::Degenerate(_))));
        let two = vec![Vec3::zeros(), Vec3::x()];
        assert!(matches!(umeyama_sim3(&two, &two), Err(Error::Degenerate(_))));
        assert!(umeyama_sim3(&two, &p).is_err());
    }
}
