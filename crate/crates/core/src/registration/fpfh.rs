//! Fast point feature histograms: 11 bins for each of the three Darboux
//! angle features.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::geometry::{estimate_normals, KdTree, Point3, Vector3, NORMAL_NEIGHBORS};

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

pub type Feature = [f64; FPFH_DIM];

fn pair_features(p1: &Point3, n1: &Vector3, p2: &Point3, n2: &Vector3) -> Option<[f64; 3]> {
    let mut d = p2 - p1;
    let len = d.norm();
    if len == 0.0 {
        return None;
    }
    let a1 = n1.dot(&d) / len;
    let a2 = n2.dot(&d) / len;
    let (u, w2, f3) = if a1.abs().acos() > a2.abs().acos() {
        d = -d;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let mut v = d.cross(u);
    let vn = v.norm();
    if vn == 0.0 {
        return None;
    }
    v /= vn;
    let w = u.cross(&v);
    Some([w.dot(w2).atan2(u.dot(w2)), v.dot(w2), f3])
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = (FPFH_BINS as f64 * (value - lo) / (hi - lo)).floor();
    (b.max(0.0) as usize).min(FPFH_BINS - 1)
}

/// FPFH descriptor per point using neighbors within `radius`.
pub fn compute_fpfh(points: &[Point3], radius: f64) -> Vec<Feature> {
    if points.is_empty() {
        return Vec::new();
    }
    let normals = estimate_normals(points, NORMAL_NEIGHBORS.min(points.len()));
    let tree = KdTree::new(points);
    let neighborhoods: Vec<Vec<(usize, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.within_radius(p, radius)
                .into_iter()
                .filter(|nb| nb.index != i)
                .map(|nb| (nb.index, nb.distance()))
                .collect()
        })
        .collect();

    let spfh: Vec<Feature> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut h = [0.0; FPFH_DIM];
            let nbrs = &neighborhoods[i];
            if nbrs.is_empty() {
                return h;
            }
            let incr = 100.0 / nbrs.len() as f64;
            for &(j, _) in nbrs {
                if let Some([f1, f2, f3]) = pair_features(&points[i], &normals[i], &points[j], &normals[j]) {
                    h[bin(f1, -PI, PI)] += incr;
                    h[FPFH_BINS + bin(f2, -1.0, 1.0)] += incr;
                    h[2 * FPFH_BINS + bin(f3, -1.0, 1.0)] += incr;
                }
            }
            h
        })
        .collect();

    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0; FPFH_DIM];
            let mut sums = [0.0; 3];
            for &(j, dist) in &neighborhoods[i] {
                if dist == 0.0 {
                    continue;
                }
                for (b, v) in spfh[j].iter().enumerate() {
                    let val = v / dist;
                    sums[b / FPFH_BINS] += val;
                    f[b] += val;
                }
            }
            for (b, v) in f.iter_mut().enumerate() {
                let s = sums[b / FPFH_BINS];
                if s != 0.0 {
                    *v *= 100.0 / s;
                }
                *v += spfh[i][b];
            }
            f
        })
        .collect()
}

pub fn feature_distance2(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    #[test]
    fn rigid_motion_leaves_features_unchanged() {
        let pts: Vec<Point3> = (0..400)
            .map(|i| {
                let t = i as f64 * 0.1;
                Point3::new(0.05 * t.cos(), 0.03 * t.sin(), 0.0005 * i as f64)
            })
            .collect();
        let t = RigidTransform::from_euler_xyz(0.4, 1.0, -2.0);
        let moved: Vec<Point3> = pts.iter().map(|p| t.apply(p)).collect();
        let a = compute_fpfh(&pts, 0.025);
        let b = compute_fpfh(&moved, 0.025);
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| feature_distance2(x, y)).sum::<f64>() / a.len() as f64;
        assert!(diff < 1.0, "mean squared difference {diff}");
        assert!(a.iter().all(|f| f.iter().all(|v| v.is_finite())));
    }
}
