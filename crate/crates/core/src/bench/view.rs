//! Single-viewpoint visibility, sensor-style perturbations and the
//! point-label IoU.

use std::collections::{BTreeSet, HashMap};

use parry3d_f64::math::Vector3 as HullVector;
use parry3d_f64::transformation::try_convex_hull;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{aabb, Aabb, Point3, PointCloud, RigidTransform, Vector3};

/// Spherical-flip radius as a multiple of the scene diagonal.
pub const HPR_RADIUS_FACTOR: f64 = 100.0;

/// Camera pose at `eye` whose optical axis (local `+z`) points at `target`.
pub fn look_at(eye: &Point3, target: &Point3, up: &Vector3) -> Result<RigidTransform> {
    let z = target - eye;
    if z.norm() == 0.0 {
        return Err(Error::Spec("camera eye coincides with its target".into()));
    }
    let z = z.normalize();
    let mut x = z.cross(up);
    if x.norm() < 1e-9 {
        x = z.cross(&Vector3::x());
        if x.norm() < 1e-9 {
            x = z.cross(&Vector3::y());
        }
    }
    let x = x.normalize();
    let y = z.cross(&x);
    RigidTransform::new(nalgebra::Matrix3::from_columns(&[x, y, z]), eye.coords)
}

/// Indices of the points visible from `eye` under hidden-point removal: the
/// points are flipped about a large sphere centered at the eye, and those
/// landing on the convex hull of the flipped set plus the eye are visible.
pub fn visible_indices(cloud: &PointCloud, eye: &Point3) -> Result<Vec<usize>> {
    let bbox = aabb(cloud)?;
    if bbox.contains(eye) {
        return Err(Error::Spec("camera lies inside the object's bounding box".into()));
    }
    let diag = Aabb::of_points(cloud.points().iter().chain(std::iter::once(eye)))?.diagonal();
    let radius = HPR_RADIUS_FACTOR * diag;

    let mut flipped = Vec::with_capacity(cloud.len() + 1);
    let mut owner: HashMap<[u64; 3], Vec<usize>> = HashMap::with_capacity(cloud.len());
    for (i, p) in cloud.points().iter().enumerate() {
        let v = p - eye;
        let n = v.norm();
        let f = v * (2.0 * radius / n - 1.0);
        let h = HullVector::new(f.x, f.y, f.z);
        owner
            .entry([f.x.to_bits(), f.y.to_bits(), f.z.to_bits()])
            .or_default()
            .push(i);
        flipped.push(h);
    }
    flipped.push(HullVector::new(0.0, 0.0, 0.0));
    if flipped.len() < 4 {
        return Ok((0..cloud.len()).collect());
    }
    let (vertices, _) = try_convex_hull(&flipped).map_err(|e| Error::Spec(format!("visibility hull failed: {e:?}")))?;
    let mut visible = BTreeSet::new();
    for v in vertices {
        if let Some(ids) = owner.get(&[v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]) {
            visible.extend(ids.iter().copied());
        }
    }
    Ok(visible.into_iter().collect())
}

/// Portion of `cloud` visible from the origin of `camera` (labels kept).
pub fn partial_view(cloud: &PointCloud, camera: &RigidTransform) -> Result<PointCloud> {
    let eye = Point3::from(*camera.translation());
    Ok(cloud.select(&visible_indices(cloud, &eye)?))
}

/// Oriented box; points inside are removed as occluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccluderBox {
    /// Box frame in the cloud's frame.
    pub pose: RigidTransform,
    pub half_extents: [f64; 3],
}

impl OccluderBox {
    pub fn contains(&self, p: &Point3) -> bool {
        let l = self.pose.inverse().apply(p);
        (0..3).all(|i| l[i].abs() <= self.half_extents[i])
    }
}

/// Occluder covering the `fraction` of `cloud` that lies furthest along
/// `direction` (projected onto the image plane of a camera at `eye`), so
/// that a contiguous image region is blocked.
pub fn occluder_for_fraction(
    cloud: &PointCloud,
    eye: &Point3,
    direction: &Vector3,
    fraction: f64,
) -> Result<OccluderBox> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Spec(format!(
            "occlusion fraction must be in [0, 1], got {fraction}"
        )));
    }
    let center = cloud.centroid()?;
    let view = (center - eye).normalize();
    let d = direction - view * direction.dot(&view);
    if d.norm() < 1e-9 {
        return Err(Error::Spec("occlusion direction is parallel to the view axis".into()));
    }
    let d = d.normalize();
    let e = view.cross(&d);
    let proj = |p: &Point3| {
        let v = p - center;
        Vector3::new(v.dot(&d), v.dot(&e), v.dot(&view))
    };
    let local: Vec<Vector3> = cloud.points().iter().map(proj).collect();
    let mut along: Vec<f64> = local.iter().map(|v| v.x).collect();
    along.sort_by(f64::total_cmp);
    let n = along.len();
    let cut = ((1.0 - fraction) * n as f64).round() as usize;
    let margin = 1e-3;
    let lo = if cut >= n {
        along[n - 1] + margin
    } else {
        along[cut] - 1e-12
    };
    let hi = along[n - 1] + margin;
    let (mut min, mut max) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
    for v in &local {
        min = min.inf(v);
        max = max.sup(v);
    }
    let mid = Vector3::new((lo + hi) / 2.0, (min.y + max.y) / 2.0, (min.z + max.z) / 2.0);
    let rotation = nalgebra::Matrix3::from_columns(&[d, e, view]);
    let pose = RigidTransform::new(rotation, center.coords + rotation * mid)?;
    Ok(OccluderBox {
        pose,
        half_extents: [
            (hi - lo) / 2.0,
            (max.y - min.y) / 2.0 + margin,
            (max.z - min.z) / 2.0 + margin,
        ],
    })
}

/// Sensor-style degradations applied to an observed cloud.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub occluder: Option<OccluderBox>,
    /// Per-axis standard deviation of the Gaussian jitter, meters.
    pub noise_sigma: f64,
    /// Radius of neighborhood-average smoothing, meters.
    pub smoothing: Option<f64>,
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Spec(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if let Some(r) = self.smoothing {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Spec(format!("smoothing radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Occlusion, then jitter, then smoothing. Labels follow their points.
pub fn perturb(cloud: &PointCloud, p: &Perturbation, rng: &mut impl Rng) -> Result<PointCloud> {
    p.validate()?;
    let mut out = match &p.occluder {
        Some(b) => cloud.filter(|_, q| !b.contains(q)),
        None => cloud.clone(),
    };
    if p.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, p.noise_sigma).expect("validated sigma");
        let jitter: Vec<Vector3> = (0..out.len())
            .map(|_| Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
            .collect();
        let pts: Vec<Point3> = out.points().iter().zip(&jitter).map(|(q, j)| q + j).collect();
        out = rebuild(&out, pts)?;
    }
    if let (Some(r), false) = (p.smoothing, out.is_empty()) {
        let tree = out.kdtree();
        let src = out.points();
        let pts: Vec<Point3> = src
            .iter()
            .map(|q| {
                let nbrs = tree.within_radius(q, r);
                let sum = nbrs.iter().fold(Vector3::zeros(), |a, n| a + src[n.index].coords);
                Point3::from(sum / nbrs.len() as f64)
            })
            .collect();
        out = rebuild(&out, pts)?;
    }
    Ok(out)
}

fn rebuild(like: &PointCloud, points: Vec<Point3>) -> Result<PointCloud> {
    match like.labels() {
        Some(l) => PointCloud::with_labels(points, l.to_vec()),
        None => PointCloud::new(points),
    }
}

/// Point-index IoU between a predicted index set and the points of `cloud`
/// labeled `truth_label` (or a sub-part of it). Two empty sets give 1.
pub fn iou_3d(predicted: &[usize], truth_label: &str, cloud: &PointCloud) -> f64 {
    let pred: BTreeSet<usize> = predicted.iter().copied().collect();
    let truth: BTreeSet<usize> = cloud.indices_with_label(truth_label).into_iter().collect();
    let union = pred.union(&truth).count();
    if union == 0 {
        return 1.0;
    }
    pred.intersection(&truth).count() as f64 / union as f64
}
