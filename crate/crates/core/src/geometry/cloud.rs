use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{KdTree, Point3, RigidTransform};
use crate::error::{Error, Result};

/// Ordered set of 3-D points in meters with optional per-point part labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "CloudRepr", into = "CloudRepr")]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct CloudRepr {
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl TryFrom<CloudRepr> for PointCloud {
    type Error = Error;

    fn try_from(repr: CloudRepr) -> Result<Self> {
        let points = repr.points.into_iter().map(|[x, y, z]| Point3::new(x, y, z)).collect();
        match repr.labels {
            Some(labels) => PointCloud::with_labels(points, labels),
            None => PointCloud::new(points),
        }
    }
}

impl From<PointCloud> for CloudRepr {
    fn from(cloud: PointCloud) -> Self {
        CloudRepr {
            points: cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            labels: cloud.labels,
        }
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        check_finite(&points)?;
        Ok(Self { points, labels: None })
    }

    pub fn with_labels(points: Vec<Point3>, labels: Vec<String>) -> Result<Self> {
        check_finite(&points)?;
        if labels.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.as_ref().map(|l| l[i].as_str())
    }

    pub fn without_labels(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            labels: None,
        }
    }

    /// Distinct labels in sorted order.
    pub fn label_set(&self) -> Vec<String> {
        let mut set: Vec<String> = self.labels.iter().flatten().cloned().collect();
        set.sort();
        set.dedup();
        set
    }

    /// Sub-cloud by index, labels carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    /// Indices whose label equals `path` or lies below it (`body` selects `body.inside`).
    pub fn indices_with_label(&self, path: &str) -> Vec<usize> {
        match &self.labels {
            None => Vec::new(),
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, l)| label_under(l, path))
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3) -> bool) -> PointCloud {
        let idx: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| keep(*i, p))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn relabel(&self, label: &str) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            labels: Some(vec![label.to_string(); self.points.len()]),
        }
    }

    /// Concatenation; labels are kept only if both sides carry them.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        PointCloud { points, labels }
    }

    pub fn centroid(&self) -> Result<Point3> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Ok(Point3::from(sum / self.points.len() as f64))
    }

    pub fn kdtree(&self) -> KdTree {
        KdTree::new(&self.points)
    }
}

pub(crate) fn label_under(label: &str, path: &str) -> bool {
    label == path || (label.len() > path.len() && label.starts_with(path) && label.as_bytes()[path.len()] == b'.')
}

fn check_finite(points: &[Point3]) -> Result<()> {
    if let Some(i) = points
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        return Err(Error::InvalidArgument(format!("point {i} has a non-finite coordinate")));
    }
    Ok(())
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Result<Aabb> {
        let mut it = points.into_iter();
        let first = it.next().ok_or(Error::EmptyCloud)?;
        let (min, max) = it.fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Ok(Aabb { min, max })
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.diagonal()
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

pub fn aabb(cloud: &PointCloud) -> Result<Aabb> {
    Aabb::of_points(cloud.points())
}

/// Voxel grid filter anchored at the origin: one centroid per occupied cell,
/// labels by majority vote (ties go to the lexicographically smaller label).
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    if !(leaf > 0.0 && leaf.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "leaf size must be positive, got {leaf}"
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    struct Cell<'a> {
        sum: Vector3<f64>,
        count: usize,
        votes: BTreeMap<&'a str, usize>,
    }
    let mut cells: BTreeMap<[i64; 3], Cell> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = [
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        ];
        let cell = cells.entry(key).or_insert_with(|| Cell {
            sum: Vector3::zeros(),
            count: 0,
            votes: BTreeMap::new(),
        });
        cell.sum += p.coords;
        cell.count += 1;
        if let Some(labels) = &cloud.labels {
            *cell.votes.entry(labels[i].as_str()).or_default() += 1;
        }
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut labels = cloud.labels.as_ref().map(|_| Vec::with_capacity(cells.len()));
    for (key, cell) in cells {
        let c = if cell.count == 1 {
            cell.sum
        } else {
            cell.sum / cell.count as f64
        };
        // keep the centroid inside its own cell so a second pass is a no-op
        let mut q = Point3::from(c);
        for a in 0..3 {
            q[a] = nudge_into_cell(q[a], key[a], leaf);
        }
        points.push(q);
        if let Some(l) = labels.as_mut() {
            let best = cell
                .votes
                .iter()
                .fold(None::<(&str, usize)>, |best, (name, n)| match best {
                    Some((_, bn)) if bn >= *n => best,
                    _ => Some((name, *n)),
                })
                .map(|(name, _)| name.to_string())
                .unwrap_or_default();
            l.push(best);
        }
    }
    Ok(PointCloud { points, labels })
}

fn nudge_into_cell(mut v: f64, cell: i64, leaf: f64) -> f64 {
    // rounding in the centroid sum can land a hair outside the cell
    for _ in 0..64 {
        let c = (v / leaf).floor() as i64;
        if c == cell {
            break;
        }
        v = if c < cell { v.next_up() } else { v.next_down() };
    }
    v
}

/// Indices of the `k` nearest points to `query`, ascending by distance.
pub fn knn(cloud: &PointCloud, query: &Point3, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > cloud.len() {
        return Err(Error::InsufficientPoints {
            needed: k,
            available: cloud.len(),
        });
    }
    Ok(cloud.kdtree().knn(query, k).into_iter().map(|n| n.index).collect())
}

fn centered_matrix(points: &[Point3]) -> (Point3, DMatrix<f64>) {
    let n = points.len();
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n as f64;
    let m = DMatrix::from_fn(n, 3, |r, c| points[r][c] - mean[c]);
    (Point3::from(mean), m)
}

/// Singular values of the mean-centered point matrix, descending.
pub fn pca_singular_values(cloud: &PointCloud) -> Result<Vector3<f64>> {
    singular_values_of(cloud.points())
}

pub(crate) fn singular_values_of(points: &[Point3]) -> Result<Vector3<f64>> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            available: points.len(),
        });
    }
    let (_, m) = centered_matrix(points);
    let sv = m.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(Vector3::new(s[0], s[1], s[2]))
}

/// Orthonormal frame of principal axes (columns) centered at the mean.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalFrame {
    pub origin: Point3,
    pub axes: Matrix3<f64>,
}

impl PrincipalFrame {
    pub fn of_points(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.len() < 3 {
            let (mean, _) = centered_matrix(points);
            return Ok(Self {
                origin: mean,
                axes: Matrix3::identity(),
            });
        }
        let (origin, m) = centered_matrix(points);
        let svd = m.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let axes = Matrix3::from_fn(|r, c| vt[(order[c], r)]);
        Ok(Self { origin, axes })
    }

    pub fn to_local(&self, p: &Point3) -> Vector3<f64> {
        self.axes.transpose() * (p - self.origin)
    }

    pub fn to_world(&self, v: &Vector3<f64>) -> Point3 {
        self.origin + self.axes * v
    }

    /// Bounding box of `points` aligned with this frame, returned as
    /// (center in world coordinates, half diagonal).
    pub fn box_of(&self, points: impl IntoIterator<Item = impl std::borrow::Borrow<Point3>>) -> Result<(Point3, f64)> {
        let local: Vec<Point3> = points
            .into_iter()
            .map(|p| Point3::from(self.to_local(p.borrow())))
            .collect();
        let b = Aabb::of_points(&local)?;
        Ok((self.to_world(&b.center().coords), b.half_diagonal()))
    }
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.map_points(|p| t.apply(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    pts.push(Point3::new(x as f64 * spacing, y as f64 * spacing, z as f64 * spacing));
                }
            }
        }
        PointCloud::new(pts).unwrap()
    }

    /// Independent bucketing oracle: integer grid coordinates bucketed by i / 5.
    #[test]
    fn voxel_grid_of_thousand_points() {
        let cloud = grid(10, 0.001);
        let down = voxel_downsample(&cloud, 0.005).unwrap();
        assert_eq!(down.len(), 8);
        let mut expected = Vec::new();
        for bx in 0..2 {
            for by in 0..2 {
                for bz in 0..2 {
                    // mean of 5 consecutive integers starting at 5b is 5b + 2
                    expected.push(Point3::new(
                        (5 * bx + 2) as f64 * 0.001,
                        (5 * by + 2) as f64 * 0.001,
                        (5 * bz + 2) as f64 * 0.001,
                    ));
                }
            }
        }
        for e in &expected {
            assert!(
                down.points().iter().any(|p| (p - e).norm() < 1e-12),
                "missing centroid {e}"
            );
        }
    }

    #[test]
    fn voxel_single_point_unchanged() {
        let cloud = PointCloud::new(vec![Point3::new(0.0123, -0.4, 3.3)]).unwrap();
        let down = voxel_downsample(&cloud, 0.005).unwrap();
        assert_eq!(down, cloud);
    }

    #[test]
    fn voxel_errors() {
        assert!(matches!(
            voxel_downsample(&PointCloud::default(), 0.005),
            Err(Error::EmptyCloud)
        ));
        let c = grid(2, 1.0);
        assert!(voxel_downsample(&c, 0.0).is_err());
    }

    #[test]
    fn voxel_majority_labels() {
        let pts = vec![
            Point3::new(0.001, 0.001, 0.001),
            Point3::new(0.002, 0.001, 0.001),
            Point3::new(0.003, 0.001, 0.001),
        ];
        let labels = vec!["b".to_string(), "a".to_string(), "b".to_string()];
        let down = voxel_downsample(&PointCloud::with_labels(pts, labels).unwrap(), 0.005).unwrap();
        assert_eq!(down.labels().unwrap(), &["b".to_string()]);
    }

    #[test]
    fn knn_bounds() {
        let c = grid(3, 1.0);
        assert_eq!(knn(&c, &Point3::origin(), 27).unwrap().len(), 27);
        assert_eq!(knn(&c, &Point3::new(1.0, 1.0, 1.0), 1).unwrap(), vec![13]);
        assert!(matches!(
            knn(&c, &Point3::origin(), 28),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn pca_of_line_and_cube() {
        let line = PointCloud::new(
            (0..10)
                .map(|i| Point3::new(i as f64, 2.0 * i as f64, -(i as f64)))
                .collect(),
        )
        .unwrap();
        let s = pca_singular_values(&line).unwrap();
        assert!(s[1].abs() < 1e-9 && s[2].abs() < 1e-9);

        // centered corners of a side-2 cube form an 8x3 matrix with orthogonal
        // columns of squared norm 8, so all singular values equal sqrt(8)
        let corners = grid(2, 2.0);
        let s = pca_singular_values(&corners).unwrap();
        for v in s.iter() {
            assert!((v - 8f64.sqrt()).abs() < 1e-9);
        }
        assert!(pca_singular_values(&PointCloud::new(vec![Point3::origin(); 2]).unwrap()).is_err());
    }

    #[test]
    fn aabb_cases() {
        let one = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap();
        let b = aabb(&one).unwrap();
        assert_eq!(b.min, b.max);
        let cube = grid(2, 1.0);
        let b = aabb(&cube).unwrap();
        assert_eq!(b.min, Point3::origin());
        assert_eq!(b.max, Point3::new(1.0, 1.0, 1.0));
        assert_eq!(b.center(), Point3::new(0.5, 0.5, 0.5));
        assert!(aabb(&PointCloud::default()).is_err());
    }

    #[test]
    fn json_cloud_schema() {
        let c = PointCloud::with_labels(vec![Point3::new(1.0, 2.0, 3.0)], vec!["handle".into()]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"points":[[1.0,2.0,3.0]],"labels":["handle"]}"#);
        let bad = r#"{"points":[[1.0,2.0,3.0]],"labels":["a","b"]}"#;
        assert!(serde_json::from_str::<PointCloud>(bad).is_err());
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((-0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2), 3..300)
            .prop_map(|v| PointCloud::new(v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()).unwrap())
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            -3.2f64..3.2,
            -3.2f64..3.2,
            -3.2f64..3.2,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_map(|(a, b, c, x, y, z)| {
                RigidTransform::from_translation(Vector3::new(x, y, z)) * RigidTransform::from_euler_xyz(a, b, c)
            })
    }

    proptest! {
        #[test]
        fn voxel_downsample_idempotent(cloud in arb_cloud(), leaf in 0.001f64..0.1) {
            let once = voxel_downsample(&cloud, leaf).unwrap();
            let twice = voxel_downsample(&once, leaf).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn pca_rigid_and_permutation_invariant(cloud in arb_cloud(), t in arb_transform(), rot in 0usize..300) {
            let s0 = pca_singular_values(&cloud).unwrap();
            let s1 = pca_singular_values(&apply_transform(&cloud, &t)).unwrap();
            let mut pts = cloud.points().to_vec();
            let r = rot % pts.len();
            pts.rotate_left(r);
            pts.reverse();
            let s2 = pca_singular_values(&PointCloud::new(pts).unwrap()).unwrap();
            prop_assert!((s0 - s1).amax() < 1e-9);
            prop_assert!((s0 - s2).amax() < 1e-9);
        }

        #[test]
        fn transform_preserves_distances(cloud in arb_cloud(), t in arb_transform()) {
            let moved = apply_transform(&cloud, &t);
            let p = cloud.points();
            let q = moved.points();
            for i in 0..p.len().min(30) {
                for j in 0..p.len().min(30) {
                    prop_assert!(((p[i] - p[j]).norm() - (q[i] - q[j]).norm()).abs() < 1e-9);
                }
            }
            let back = apply_transform(&moved, &t.inverse());
            for (a, b) in back.points().iter().zip(p) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }

        #[test]
        fn aabb_matches_fold(cloud in arb_cloud()) {
            let b = aabb(&cloud).unwrap();
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for p in cloud.points() {
                for a in 0..3 { lo[a] = lo[a].min(p[a]); hi[a] = hi[a].max(p[a]); }
            }
            prop_assert_eq!(b.min, Point3::new(lo[0], lo[1], lo[2]));
            prop_assert_eq!(b.max, Point3::new(hi[0], hi[1], hi[2]));
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let c = grid(3, 0.1);
        assert_eq!(apply_transform(&c, &RigidTransform::identity()), c);
    }
}
