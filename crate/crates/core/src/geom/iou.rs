//! Exact oriented-box IoU by convex half-space clipping, plus a Monte-Carlo
//! estimator used as an independent check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::obb::OrientedBox3;
use super::rotation::Vec3;

/// Plane-side classification tolerance (meters).
pub const CLIP_EPSILON: f64 = 1e-9;

/// Corner indices of each box face, listed in cyclic order.
const BOX_FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 3, 7, 6],
    [0, 1, 3, 2],
    [4, 5, 7, 6],
];

/// Closed half-space `normal · p <= offset`.
#[derive(Debug, Clone, Copy)]
struct HalfSpace {
    normal: Vec3,
    offset: f64,
}

impl HalfSpace {
    fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Convex polytope stored as a list of convex faces, each with cyclically
/// ordered vertices (orientation is not tracked).
#[derive(Debug, Clone)]
struct Polytope {
    faces: Vec<Vec<Vec3>>,
}

impl Polytope {
    fn from_box(b: &OrientedBox3) -> Self {
        let c = b.corners();
        Polytope {
            faces: BOX_FACES
                .iter()
                .map(|f| f.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    fn clip(&mut self, plane: &HalfSpace) {
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vec3> = Vec::new();
        let mut has_coplanar_face = false;

        for face in &self.faces {
            let dist: Vec<f64> = face.iter().map(|p| plane.signed_distance(p)).collect();
            if dist.iter().all(|d| *d > CLIP_EPSILON) {
                continue;
            }
            if dist.iter().all(|d| *d <= CLIP_EPSILON) {
                if dist.iter().all(|d| d.abs() <= CLIP_EPSILON) {
                    has_coplanar_face = true;
                }
                for (p, d) in face.iter().zip(&dist) {
                    if d.abs() <= CLIP_EPSILON {
                        cap.push(*p);
                    }
                }
                faces.push(face.clone());
                continue;
            }

            let mut out = Vec::with_capacity(face.len() + 1);
            for i in 0..face.len() {
                let j = (i + 1) % face.len();
                let (p, q) = (&face[i], &face[j]);
                let (dp, dq) = (dist[i], dist[j]);
                if dp <= CLIP_EPSILON {
                    out.push(*p);
                    if dp.abs() <= CLIP_EPSILON {
                        cap.push(*p);
                    }
                }
                let crosses = (dp < -CLIP_EPSILON && dq > CLIP_EPSILON)
                    || (dp > CLIP_EPSILON && dq < -CLIP_EPSILON);
                if crosses {
                    let x = edge_plane_intersection(p, dp, q, dq);
                    out.push(x);
                    cap.push(x);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }

        if !has_coplanar_face {
            if let Some(cap_face) = order_on_plane(cap, &plane.normal) {
                faces.push(cap_face);
            }
        }
        self.faces = faces;
    }

    fn unique_vertices(&self) -> Vec<Vec3> {
        let mut verts: Vec<Vec3> = Vec::new();
        for p in self.faces.iter().flatten() {
            if !verts.iter().any(|v| (v - p).norm_squared() <= 1e-24) {
                verts.push(*p);
            }
        }
        verts
    }

    /// Divergence-theorem volume: sum of tetrahedra from an interior point
    /// to the fan triangulation of every face.
    fn volume(&self) -> f64 {
        let verts = self.unique_vertices();
        if verts.len() < 4 {
            return 0.0;
        }
        let apex = verts.iter().sum::<Vec3>() / verts.len() as f64;
        let mut six_vol = 0.0;
        for face in &self.faces {
            let a = face[0] - apex;
            for k in 1..face.len() - 1 {
                let b = face[k] - apex;
                let c = face[k + 1] - apex;
                six_vol += a.dot(&b.cross(&c)).abs();
            }
        }
        six_vol / 6.0
    }
}

/// Intersection computed from a canonical endpoint order so that the two faces
/// sharing an edge produce bit-identical points.
fn edge_plane_intersection(p: &Vec3, dp: f64, q: &Vec3, dq: f64) -> Vec3 {
    let swap = (q.x, q.y, q.z) < (p.x, p.y, p.z);
    let (a, da, b, db) = if swap { (q, dq, p, dp) } else { (p, dp, q, dq) };
    let t = da / (da - db);
    a + (b - a) * t
}

/// Deduplicates coplanar points and orders them by angle around their centroid.
fn order_on_plane(points: Vec<Vec3>, normal: &Vec3) -> Option<Vec<Vec3>> {
    let mut uniq: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !uniq.iter().any(|v| (v - p).norm_squared() <= 1e-24) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let centroid = uniq.iter().sum::<Vec3>() / uniq.len() as f64;
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = normal.cross(&helper).normalize();
    let v = normal.cross(&u);
    let mut keyed: Vec<(f64, Vec3)> = uniq
        .into_iter()
        .map(|p| {
            let d = p - centroid;
            (d.dot(&v).atan2(d.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

fn box_half_spaces(b: &OrientedBox3) -> [HalfSpace; 6] {
    let m = b.rotation().matrix();
    let h = b.half_extents();
    let c = b.center();
    std::array::from_fn(|i| {
        let axis = i / 2;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let n = m.column(axis).into_owned() * sign;
        HalfSpace {
            normal: n,
            offset: n.dot(c) + h[axis],
        }
    })
}

/// Volume of `a ∩ b`.
pub fn intersection_volume(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    if (a.center() - b.center()).norm() > a.circumradius() + b.circumradius() {
        return 0.0;
    }
    let mut poly = Polytope::from_box(a);
    for plane in box_half_spaces(b) {
        poly.clip(&plane);
        if poly.faces.len() < 4 {
            return 0.0;
        }
    }
    poly.volume()
}

/// Exact intersection-over-union of two oriented boxes, clamped to [0, 1].
pub fn box_iou(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    let inter = intersection_volume(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Monte-Carlo IoU: `n_samples` uniform points in the joint axis-aligned
/// bounding box, deterministic for a fixed seed.
pub fn box_iou_mc(a: &OrientedBox3, b: &OrientedBox3, n_samples: usize, seed: u64) -> f64 {
    let (lo_a, hi_a) = a.aabb();
    let (lo_b, hi_b) = b.aabb();
    let lo = lo_a.inf(&lo_b);
    let hi = hi_a.sup(&hi_b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut in_a, mut in_b, mut both) = (0u64, 0u64, 0u64);
    for _ in 0..n_samples.max(1) {
        let p = Vec3::new(
            lo.x + (hi.x - lo.x) * rng.random::<f64>(),
            lo.y + (hi.y - lo.y) * rng.random::<f64>(),
            lo.z + (hi.z - lo.z) * rng.random::<f64>(),
        );
        let ia = a.contains(&p);
        let ib = b.contains(&p);
        in_a += ia as u64;
        in_b += ib as u64;
        both += (ia && ib) as u64;
    }
    let union = in_a + in_b - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation::EulerAngles;
    use approx::assert_abs_diff_eq;

    fn cube(x: f64) -> OrientedBox3 {
        OrientedBox3::axis_aligned(Vec3::new(x, 0.0, 0.0), Vec3::repeat(1.0)).unwrap()
    }

    #[test]
    fn identical_boxes() {
        let b = OrientedBox3::new(
            Vec3::new(0.2, -0.1, 1.0),
            Vec3::new(0.5, 1.5, 0.8),
            EulerAngles::new(0.4, 0.2, -1.3),
        )
        .unwrap();
        assert_abs_diff_eq!(box_iou(&b, &b), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(box_iou(&cube(0.0), &cube(0.0)), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn disjoint_cubes() {
        assert_eq!(box_iou(&cube(0.0), &cube(2.0)), 0.0);
    }

    #[test]
    fn half_offset_cubes_give_one_third() {
        // Interval oracle: overlap [0, 0.5] on x, full on y and z.
        let inter = 0.5 * 1.0 * 1.0;
        let union = 1.0 + 1.0 - inter;
        assert_abs_diff_eq!(box_iou(&cube(0.0), &cube(0.5)), inter / union, epsilon = 1e-12);
    }

    #[test]
    fn touching_faces_have_zero_iou() {
        assert_abs_diff_eq!(box_iou(&cube(0.0), &cube(1.0)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nested_box() {
        let outer = OrientedBox3::axis_aligned(Vec3::zeros(), Vec3::repeat(2.0)).unwrap();
        let inner = OrientedBox3::new(
            Vec3::zeros(),
            Vec3::repeat(0.5),
            EulerAngles::new(0.7, 0.3, 0.1),
        )
        .unwrap();
        assert_abs_diff_eq!(box_iou(&outer, &inner), 0.125 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_square_overlap_matches_planar_oracle() {
        // A unit cube and its 45° yaw copy share the full z extent; the xy
        // overlap is a regular octagon of area 2(√2 − 1).
        let a = cube(0.0);
        let b = OrientedBox3::new(
            Vec3::zeros(),
            Vec3::repeat(1.0),
            EulerAngles::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0),
        )
        .unwrap();
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(box_iou(&a, &b), inter / (2.0 - inter), epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_edge_cases() {
        assert_eq!(box_iou_mc(&cube(0.0), &cube(0.0), 10_000, 5), 1.0);
        assert_eq!(box_iou_mc(&cube(0.0), &cube(2.0), 10_000, 5), 0.0);
        let est = box_iou_mc(&cube(0.0), &cube(0.5), 1_000_000, 11);
        assert!((est - 1.0 / 3.0).abs() <= 0.005, "estimate {est}");
        assert_eq!(
            box_iou_mc(&cube(0.0), &cube(0.5), 1000, 3),
            box_iou_mc(&cube(0.0), &cube(0.5), 1000, 3)
        );
    }
}
