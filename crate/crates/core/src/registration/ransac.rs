//! Feature-matching RANSAC for a coarse initial alignment.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fpfh::{compute_fpfh, feature_distance2};
use super::icp::kabsch;
use crate::error::{Error, Result};
use crate::geometry::{singular_values_of, KdTree, Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub leaf: f64,
    pub seed: u64,
    pub max_iterations: usize,
    pub confidence: f64,
    /// Minimum ratio between corresponding edge lengths of a sample.
    pub edge_ratio: f64,
}

impl RansacConfig {
    pub fn new(leaf: f64, seed: u64) -> Self {
        Self {
            leaf,
            seed,
            max_iterations: 100_000,
            confidence: 0.999,
            edge_ratio: 0.9,
        }
    }

    pub fn feature_radius(&self) -> f64 {
        5.0 * self.leaf
    }

    pub fn inlier_distance(&self) -> f64 {
        1.5 * self.leaf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseAlignment {
    pub transform: RigidTransform,
    pub inliers: usize,
    pub iterations: usize,
}

fn is_collinear(points: &[Point3]) -> bool {
    match singular_values_of(points) {
        Ok(s) => !(s[0] > 0.0) || s[1] <= 1e-9 * s[0],
        Err(_) => true,
    }
}

/// Nearest target descriptor for every source descriptor.
fn match_features(src: &[[f64; 33]], dst: &[[f64; 33]]) -> Vec<(usize, usize)> {
    src.par_iter()
        .enumerate()
        .map(|(i, f)| {
            let j = dst
                .iter()
                .enumerate()
                .map(|(j, g)| (feature_distance2(f, g), j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("non-empty target")
                .1;
            (i, j)
        })
        .collect()
}

fn edges_compatible(a: &[Point3; 3], b: &[Point3; 3], ratio: f64) -> bool {
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let la = (a[i] - a[j]).norm();
        let lb = (b[i] - b[j]).norm();
        if la == 0.0 || lb == 0.0 || la.min(lb) < ratio * la.max(lb) {
            return false;
        }
    }
    true
}

/// Estimates a transform mapping `source` onto `target` from three-point
/// samples of FPFH descriptor matches; keeps the hypothesis with the most
/// inliers (then the lowest inlier error).
pub fn coarse_align(source: &PointCloud, target: &PointCloud, config: &RansacConfig) -> Result<CoarseAlignment> {
    for c in [source, target] {
        if c.len() < 10 {
            return Err(Error::InsufficientPoints {
                needed: 10,
                available: c.len(),
            });
        }
    }
    let src = source.points();
    let dst = target.points();
    if is_collinear(src) || is_collinear(dst) {
        return Err(Error::CoarseFailure(
            "cloud is degenerate (collinear or coincident points)".into(),
        ));
    }
    let fs = compute_fpfh(src, config.feature_radius());
    let ft = compute_fpfh(dst, config.feature_radius());
    let corr = match_features(&fs, &ft);
    let tree = KdTree::new(dst);
    let inlier_d = config.inlier_distance();
    let inlier_d2 = inlier_d * inlier_d;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut best: Option<(usize, f64, RigidTransform)> = None;
    let mut limit = config.max_iterations;
    let mut it = 0;
    while it < limit {
        it += 1;
        let pick = sample(&mut rng, corr.len(), 3);
        let idx = [pick.index(0), pick.index(1), pick.index(2)];
        let a = idx.map(|k| src[corr[k].0]);
        let b = idx.map(|k| dst[corr[k].1]);
        if !edges_compatible(&a, &b, config.edge_ratio) {
            continue;
        }
        let Ok(t) = kabsch(&a, &b) else { continue };
        if a.iter().zip(&b).any(|(p, q)| (t.apply(p) - q).norm() > inlier_d) {
            continue;
        }
        let mut inliers = 0;
        let mut err = 0.0;
        for p in src {
            let nb = tree.nearest(&t.apply(p)).expect("non-empty");
            if nb.dist2 <= inlier_d2 {
                inliers += 1;
                err += nb.dist2;
            }
        }
        let rmse = if inliers > 0 {
            (err / inliers as f64).sqrt()
        } else {
            f64::INFINITY
        };
        let better = match &best {
            None => true,
            Some((bi, br, _)) => inliers > *bi || (inliers == *bi && rmse < *br),
        };
        if better {
            best = Some((inliers, rmse, t));
            let w = inliers as f64 / src.len() as f64;
            if w >= 1.0 {
                limit = it;
            } else if w > 0.0 {
                let needed = ((1.0 - config.confidence).ln() / (1.0 - w.powi(3)).ln()).ceil();
                if needed.is_finite() && needed >= 0.0 {
                    limit = limit.min(needed as usize);
                }
            }
        }
    }
    match best {
        Some((inliers, _, transform)) if inliers >= 3 => Ok(CoarseAlignment {
            transform,
            inliers,
            iterations: it,
        }),
        Some((inliers, ..)) => Err(Error::CoarseFailure(format!("best hypothesis has {inliers} inliers"))),
        None => Err(Error::CoarseFailure(format!("no valid hypothesis in {it} iterations"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, Vector3};
    use crate::registration::icp;

    fn box_surface() -> PointCloud {
        // open box with uneven sides, sampled at 4 mm
        let mut pts = Vec::new();
        let (a, b, c) = (0.08, 0.05, 0.03);
        let step = 0.004;
        let n = |l: f64| (l / step).round() as usize;
        for i in 0..=n(a) {
            for j in 0..=n(b) {
                pts.push(Point3::new(i as f64 * step, j as f64 * step, 0.0));
            }
            for k in 1..=n(c) {
                pts.push(Point3::new(i as f64 * step, 0.0, k as f64 * step));
            }
        }
        for j in 1..=n(b) {
            for k in 1..=n(c) {
                pts.push(Point3::new(0.0, j as f64 * step, k as f64 * step));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn recovers_rigid_copy() {
        let src = box_surface();
        let truth = RigidTransform::from_euler_xyz(0.7, -1.2, 2.5)
            * RigidTransform::from_translation(Vector3::new(0.2, -0.1, 0.3));
        let dst = apply_transform(&src, &truth);
        let coarse = coarse_align(&src, &dst, &RansacConfig::new(0.005, 7)).unwrap();
        let fine = icp(&src, &dst, &coarse.transform, 0.0075).unwrap();
        assert!(fine.fitness >= 0.9, "fitness {}", fine.fitness);
    }

    #[test]
    fn repeated_point_fails() {
        let c = PointCloud::new(vec![Point3::new(0.1, 0.1, 0.1); 20]).unwrap();
        assert!(matches!(
            coarse_align(&c, &box_surface(), &RansacConfig::new(0.005, 1)),
            Err(Error::CoarseFailure(_))
        ));
    }

    #[test]
    fn seeded_runs_repeat() {
        let src = box_surface();
        let dst = apply_transform(&src, &RigidTransform::from_euler_xyz(0.1, 0.2, 0.3));
        let a = coarse_align(&src, &dst, &RansacConfig::new(0.005, 11)).unwrap();
        let b = coarse_align(&src, &dst, &RansacConfig::new(0.005, 11)).unwrap();
        assert_eq!(a, b);
    }
}
