use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud, RigidTransform, Vector3};

pub const ICP_MAX_ITERATIONS: usize = 50;
pub const ICP_RELATIVE_TOLERANCE: f64 = 1e-6;

/// Least-squares rigid fit mapping `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            available: src.len().min(dst.len()),
        });
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    RigidTransform::new(r, cd - r * cs).map_err(|e| Error::RegistrationFailure(format!("rigid fit: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Fraction of source points with a target neighbor within the threshold.
    pub fitness: f64,
    /// RMSE over the inlier correspondences.
    pub rmse: f64,
    pub correspondences: usize,
    pub iterations: usize,
    /// Truncated RMSE per iterate (outliers count at the threshold); this is
    /// the quantity each iteration cannot increase.
    pub history: Vec<f64>,
}

struct Matching {
    pairs: Vec<(usize, usize)>,
    sum_sq: f64,
}

fn match_points(src: &[Point3], t: &RigidTransform, tree: &KdTree, max_dist: f64) -> Matching {
    let max2 = max_dist * max_dist;
    let mut pairs = Vec::new();
    let mut sum_sq = 0.0;
    for (i, p) in src.iter().enumerate() {
        let nb = tree.nearest(&t.apply(p)).expect("non-empty target");
        if nb.dist2 <= max2 {
            pairs.push((i, nb.index));
            sum_sq += nb.dist2;
        }
    }
    Matching { pairs, sum_sq }
}

fn truncated_rmse(m: &Matching, n: usize, max_dist: f64) -> f64 {
    ((m.sum_sq + (n - m.pairs.len()) as f64 * max_dist * max_dist) / n as f64).sqrt()
}

/// Point-to-point ICP from `init`, rejecting pairs farther than `max_corr_dist`.
pub fn icp(source: &PointCloud, target: &PointCloud, init: &RigidTransform, max_corr_dist: f64) -> Result<IcpResult> {
    if !(max_corr_dist > 0.0) {
        return Err(Error::InvalidArgument("max_corr_dist must be positive".into()));
    }
    for c in [source, target] {
        if c.len() < 3 {
            return Err(Error::InsufficientPoints {
                needed: 3,
                available: c.len(),
            });
        }
    }
    let src = source.points();
    let dst = target.points();
    let tree = KdTree::new(dst);
    let n = src.len();
    let too_few = |m: &Matching| {
        Error::RegistrationFailure(format!(
            "{} correspondences within {max_corr_dist} m (need 3)",
            m.pairs.len()
        ))
    };

    let mut t = *init;
    let mut m = match_points(src, &t, &tree, max_corr_dist);
    if m.pairs.len() < 3 {
        return Err(too_few(&m));
    }
    let mut history = vec![truncated_rmse(&m, n, max_corr_dist)];
    let mut iterations = 0;
    while iterations < ICP_MAX_ITERATIONS {
        let a: Vec<Point3> = m.pairs.iter().map(|&(i, _)| src[i]).collect();
        let b: Vec<Point3> = m.pairs.iter().map(|&(_, j)| dst[j]).collect();
        let next = kabsch(&a, &b)?;
        let next_m = match_points(src, &next, &tree, max_corr_dist);
        if next_m.pairs.len() < 3 {
            return Err(too_few(&next_m));
        }
        iterations += 1;
        let prev = *history.last().expect("seeded");
        let cur = truncated_rmse(&next_m, n, max_corr_dist);
        debug_assert!(
            cur <= prev * (1.0 + 1e-9) + 1e-12 * max_corr_dist,
            "icp objective rose: {prev} -> {cur}"
        );
        // guard against round-off making the last step a regression
        if cur > prev {
            break;
        }
        t = next;
        m = next_m;
        history.push(cur);
        let change = if prev > 0.0 { (prev - cur) / prev } else { 0.0 };
        if change < ICP_RELATIVE_TOLERANCE {
            break;
        }
    }
    let k = m.pairs.len();
    Ok(IcpResult {
        transform: t,
        fitness: k as f64 / n as f64,
        rmse: (m.sum_sq / k as f64).sqrt(),
        correspondences: k,
        iterations,
        history,
    })
}
