//! Antipodal contact-pair sampling on a single part cloud.

use nalgebra::{Matrix3, Rotation3, Unit};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GraspPose, GripperConfig, MIN_PART_POINTS};
use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, KdTree, Point3, PointCloud, RigidTransform, Vector3, NORMAL_NEIGHBORS};

/// Grasps closer than this (center distance and relative rotation) are duplicates.
pub const DUPLICATE_DISTANCE: f64 = 0.005;
pub const DUPLICATE_ANGLE_DEG: f64 = 10.0;
pub const DEFAULT_FRICTION_HALF_ANGLE_DEG: f64 = 10.0;
pub const DEFAULT_GRASPS_PER_PART: usize = 50;

const MIN_WIDTH: f64 = 1e-4;
const SAMPLER_SEED: u64 = 0x7061_7274;

/// Contact pair test with outward normals: each contact normal must lie within
/// the friction cone around the direction pointing away from the other contact.
pub fn is_antipodal(pa: &Point3, na: &Vector3, pb: &Point3, nb: &Vector3, half_angle: f64) -> bool {
    let d = pb - pa;
    let len = d.norm();
    if len <= 0.0 {
        return false;
    }
    let dir = d / len;
    let cos = half_angle.cos();
    na.dot(&(-dir)) >= cos && nb.dot(&dir) >= cos
}

/// Gripper frame for a contact pair: closing axis `x` along `pa - pb`, `z`
/// pointing away from the part centroid (approach is `-z`).
fn grasp_frame(pa: &Point3, pb: &Point3, centroid: &Point3, roll: f64) -> RigidTransform {
    let x = (pa - pb).normalize();
    let mid = nalgebra::center(pa, pb);
    let out = mid - centroid;
    let mut z = out - x * x.dot(&out);
    if z.norm() < 1e-9 {
        // any perpendicular: cross with the world axis least aligned with x
        let helper = [Vector3::x(), Vector3::y(), Vector3::z()]
            .into_iter()
            .min_by(|a, b| a.dot(&x).abs().total_cmp(&b.dot(&x).abs()))
            .expect("three axes");
        z = x.cross(&helper);
    }
    z.normalize_mut();
    if roll != 0.0 {
        z = Rotation3::from_axis_angle(&Unit::new_unchecked(x), roll) * z;
    }
    let y = z.cross(&x);
    let r = Matrix3::from_columns(&[x, y, z]);
    RigidTransform::from_parts_unchecked(r, mid.coords)
}

fn is_duplicate(a: &GraspPose, b: &GraspPose) -> bool {
    if (a.pose.translation() - b.pose.translation()).norm() > DUPLICATE_DISTANCE {
        return false;
    }
    let lim = DUPLICATE_ANGLE_DEG.to_radians();
    if a.pose.angle_to(&b.pose) <= lim {
        return true;
    }
    // a parallel-jaw grasp is unchanged by swapping the fingers
    let flipped = b.pose * RigidTransform::from_axis_angle(&Vector3::z(), std::f64::consts::PI);
    a.pose.angle_to(&flipped) <= lim
}

/// Samples up to `target_count` distinct antipodal grasps on `part`.
///
/// Contacts are visited in a fixed pseudo-random order; each contact keeps
/// its best-aligned partner within `max_opening`. When the upright approach
/// alone does not reach the target, rolled approaches (±45° about the
/// closing axis) fill the remainder.
pub fn sample_antipodal_grasps(
    part: &PointCloud,
    gripper: &GripperConfig,
    target_count: usize,
    friction_half_angle: f64,
) -> Result<Vec<GraspPose>> {
    if part.len() < MIN_PART_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_PART_POINTS,
            available: part.len(),
        });
    }
    let pts = part.points();
    let normals = estimate_normals(pts, NORMAL_NEIGHBORS);
    let centroid = part.centroid()?;
    let tree = KdTree::new(pts);

    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(SAMPLER_SEED ^ pts.len() as u64));

    let cos_lim = friction_half_angle.cos();
    let mut pairs = Vec::new();
    for &a in &order {
        let mut best: Option<(f64, usize)> = None;
        for nb in tree.within_radius(&pts[a], gripper.max_opening) {
            let b = nb.index;
            if b == a || nb.distance() < MIN_WIDTH {
                continue;
            }
            let dir = (pts[b] - pts[a]) / nb.distance();
            let score = normals[a].dot(&(-dir)).min(normals[b].dot(&dir));
            if score >= cos_lim && best.is_none_or(|(s, _)| score > s) {
                best = Some((score, b));
            }
        }
        if let Some((_, b)) = best {
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoGrasp(format!(
            "no antipodal pair within {} m on a {}-point part",
            gripper.max_opening,
            pts.len()
        )));
    }

    let mut accepted: Vec<GraspPose> = Vec::new();
    'outer: for roll in [0.0, std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_4] {
        for &(a, b) in &pairs {
            if accepted.len() >= target_count {
                break 'outer;
            }
            let width = (pts[a] - pts[b]).norm();
            let g = GraspPose {
                pose: grasp_frame(&pts[a], &pts[b], &centroid, roll),
                width,
            };
            if !accepted.iter().any(|o| is_duplicate(o, &g)) {
                accepted.push(g);
            }
        }
    }
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::local_normal;

    fn gripper() -> GripperConfig {
        GripperConfig::default()
    }

    fn patches(gap: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let (x, y) = (i as f64 * 0.005, j as f64 * 0.005);
                pts.push(Point3::new(x, y, 0.0));
                pts.push(Point3::new(x, y, gap));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn parallel_patches_give_perpendicular_grasps() {
        let grasps = sample_antipodal_grasps(&patches(0.03), &gripper(), 50, 10f64.to_radians()).unwrap();
        assert!(!grasps.is_empty());
        for g in &grasps {
            assert!((g.width - 0.03).abs() < 1e-3, "width {}", g.width);
            let closing = g.closing_axis();
            assert!(closing.z.abs() > 10f64.to_radians().cos());
        }
    }

    #[test]
    fn large_sphere_has_no_grasp() {
        let r = 0.06;
        let n = 600;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rad = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Point3::new(r * rad * th.cos(), r * y, r * rad * th.sin())
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        assert!(matches!(
            sample_antipodal_grasps(&cloud, &gripper(), 50, 10f64.to_radians()),
            Err(Error::NoGrasp(_))
        ));
    }

    #[test]
    fn too_small_part() {
        let cloud = PointCloud::new(vec![Point3::origin(); 5]).unwrap();
        assert!(sample_antipodal_grasps(&cloud, &gripper(), 50, 0.2).is_err());
    }

    #[test]
    fn emitted_grasps_recheck_independently() {
        let cloud = patches(0.02);
        let half = 10f64.to_radians();
        let grasps = sample_antipodal_grasps(&cloud, &gripper(), 50, half).unwrap();
        let pts = cloud.points();
        let centroid = cloud.centroid().unwrap();
        // brute-force normals for the contacts
        let normal_at = |p: &Point3| {
            let mut d: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, q)| ((q - p).norm_squared(), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let n = local_normal(d.iter().take(NORMAL_NEIGHBORS).map(|(_, i)| &pts[*i]));
            if n.dot(&(p - centroid)) < 0.0 {
                -n
            } else {
                n
            }
        };
        for g in &grasps {
            let (pa, pb) = g.contacts();
            assert!(g.width <= gripper().max_opening);
            assert!(is_antipodal(&pa, &normal_at(&pa), &pb, &normal_at(&pb), half + 1e-9));
        }
        for (i, a) in grasps.iter().enumerate() {
            for b in &grasps[i + 1..] {
                assert!(!is_duplicate(a, b));
            }
        }
    }
}
