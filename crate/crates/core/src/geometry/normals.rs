use nalgebra::{Matrix3, SymmetricEigen};

use super::{KdTree, Point3, Vector3};

/// Neighborhood size used for normal estimation.
pub const NORMAL_NEIGHBORS: usize = 15;

/// PCA normals from the `k` nearest neighbors, flipped to point away from the
/// cloud centroid. Points with fewer than three neighbors get a zero normal.
pub fn estimate_normals(points: &[Point3], k: usize) -> Vec<Vector3> {
    if points.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::new(points);
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64;
    points
        .iter()
        .map(|p| {
            let nbrs = tree.knn(p, k);
            let mut n = local_normal(nbrs.iter().map(|nb| &points[nb.index]));
            if n.dot(&(p.coords - centroid)) < 0.0 {
                n = -n;
            }
            n
        })
        .collect()
}

/// Smallest-variance direction of a neighborhood (unit, unoriented).
pub fn local_normal<'a>(neighborhood: impl Iterator<Item = &'a Point3> + Clone) -> Vector3 {
    let n = neighborhood.clone().count();
    if n < 3 {
        return Vector3::zeros();
    }
    let mean = neighborhood.clone().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n as f64;
    let mut cov = Matrix3::zeros();
    for p in neighborhood {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three eigenvalues");
    let v = eig.eigenvectors.column(imin).into_owned();
    let norm = v.norm();
    if norm > 0.0 {
        v / norm
    } else {
        Vector3::zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_normals_point_away_from_centroid() {
        // two parallel planes: lower faces -z, upper faces +z
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(Point3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0));
                pts.push(Point3::new(i as f64 * 0.01, j as f64 * 0.01, 0.05));
            }
        }
        let normals = estimate_normals(&pts, NORMAL_NEIGHBORS);
        for (p, n) in pts.iter().zip(&normals) {
            let expected = if p.z > 0.0 { 1.0 } else { -1.0 };
            assert!((n.z - expected).abs() < 1e-9, "{p} {n}");
        }
    }
}
