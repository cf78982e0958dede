//! The three cluster-to-part dissimilarities and their sum.

use crate::error::{Error, Result};
use crate::geometry::{singular_values_of, Aabb, KdTree, Point3, PointCloud, PrincipalFrame, Vector3};

/// Neighbor count for a cluster: observed count scaled by the template's
/// part fraction, rounded half up and clamped to `[3, n_observed]`.
pub fn cluster_size_from_counts(n_observed: usize, n_part: usize, n_template: usize) -> Result<usize> {
    if n_template == 0 {
        return Err(Error::DegenerateTemplate("template cloud is empty".into()));
    }
    if n_observed < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            available: n_observed,
        });
    }
    let num = 2 * n_observed as u128 * n_part as u128 + n_template as u128;
    let k = (num / (2 * n_template as u128)) as usize;
    Ok(k.clamp(3, n_observed))
}

/// Singular values scaled to unit length.
pub(crate) fn unit_spectrum(points: &[Point3]) -> Result<Vector3> {
    let s = singular_values_of(points)?;
    let n = s.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateCluster("all cluster points coincide"));
    }
    Ok(s / n)
}

/// Standard deviation of the distances from `reference` to the other points,
/// divided by the largest deviation from their mean.
pub(crate) fn dispersion_ratio(points: &[Point3], reference: usize) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegenerateCluster("fewer than three points"));
    }
    let r = points[reference];
    let s: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != reference)
        .map(|(_, p)| (p - r).norm())
        .collect();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let max_dev = s.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
    if !(max_dev > 0.0) {
        return Err(Error::DegenerateCluster("all distances from the reference are equal"));
    }
    Ok(var.sqrt() / max_dev)
}

/// Index of the part point nearest to the center of the part's bounding box,
/// the box being taken along the part's own principal axes.
pub(crate) fn reference_index(points: &[Point3]) -> Result<usize> {
    let frame = PrincipalFrame::of_points(points)?;
    let (center, _) = frame.box_of(points)?;
    let tree = KdTree::new(points);
    Ok(tree.nearest(&center).expect("non-empty").index)
}

/// Distance between part and whole box centers over the whole's half
/// diagonal, both boxes aligned with the whole cloud's principal axes.
pub(crate) fn center_offset_ratio(frame: &PrincipalFrame, whole: &[Point3], part: &[Point3]) -> Result<f64> {
    let (cw, bw) = frame.box_of(whole)?;
    let (cp, _) = frame.box_of(part)?;
    ratio(cp, cw, bw)
}

fn ratio(part_center: Point3, whole_center: Point3, half_diag: f64) -> Result<f64> {
    if !(half_diag > 0.0) {
        return Err(Error::DegenerateCluster("whole cloud has a zero-size bounding box"));
    }
    Ok((part_center - whole_center).norm() / half_diag)
}

/// Ratio for a cluster whose points are given in the whole cloud's principal
/// coordinates, with the whole cloud's local box precomputed.
pub(crate) fn center_offset_ratio_local(whole_box: &Aabb, part_local: impl Iterator<Item = Point3>) -> Result<f64> {
    let mut it = part_local;
    let first = it.next().ok_or(Error::EmptyCloud)?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p)));
    ratio(
        nalgebra::center(&lo, &hi),
        whole_box.center(),
        whole_box.half_diagonal(),
    )
}

/// Spectrum-shape difference between two clusters, in `[0, √2]`.
pub fn d_pca(o_part: &PointCloud, m_part: &PointCloud) -> Result<f64> {
    Ok((unit_spectrum(o_part.points())? - unit_spectrum(m_part.points())?).norm())
}

/// Dispersion difference between the observed cluster seen from `seed` and
/// the template part seen from its reference point, in `[0, 1]`.
pub fn d_ppd(o_part: &PointCloud, seed: &Point3, m_part: &PointCloud) -> Result<f64> {
    let seed_idx = o_part
        .points()
        .iter()
        .position(|p| p == seed)
        .ok_or_else(|| Error::InvalidArgument("seed is not a member of the observed cluster".into()))?;
    let ro = dispersion_ratio(o_part.points(), seed_idx)?;
    let m = m_part.points();
    if m.len() < 3 {
        return Err(Error::DegenerateCluster("fewer than three points"));
    }
    let rm = dispersion_ratio(m, reference_index(m)?)?;
    Ok((ro - rm).abs())
}

/// Relative part-position difference, in `[0, 1]`.
pub fn d_ccd(o_all: &PointCloud, o_part: &PointCloud, m_all: &PointCloud, m_part: &PointCloud) -> Result<f64> {
    if o_part.is_empty() || m_part.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let fo = PrincipalFrame::of_points(o_all.points())?;
    let fm = PrincipalFrame::of_points(m_all.points())?;
    let co = center_offset_ratio(&fo, o_all.points(), o_part.points())?;
    let cm = center_offset_ratio(&fm, m_all.points(), m_part.points())?;
    Ok((co - cm).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_size_examples() {
        assert_eq!(cluster_size_from_counts(1000, 200, 800).unwrap(), 250);
        assert_eq!(cluster_size_from_counts(100, 1, 1000).unwrap(), 3);
        assert_eq!(cluster_size_from_counts(321, 77, 77).unwrap(), 321);
        // half rounds up
        assert_eq!(cluster_size_from_counts(10, 1, 4).unwrap(), 3);
        assert_eq!(cluster_size_from_counts(30, 1, 4).unwrap(), 8);
        assert!(matches!(
            cluster_size_from_counts(10, 1, 0),
            Err(Error::DegenerateTemplate(_))
        ));
    }

    #[test]
    fn isotropic_vs_linear_spectrum() {
        // cube corners (isotropic) against a segment (rank one)
        let mut cube = Vec::new();
        for i in 0..8 {
            cube.push(Point3::new(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ));
        }
        let line: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let d = d_pca(&PointCloud::new(cube).unwrap(), &PointCloud::new(line).unwrap()).unwrap();
        let a = 1.0 / 3f64.sqrt();
        let expected = ((a - 1.0).powi(2) + 2.0 * a * a).sqrt();
        assert!((d - expected).abs() < 1e-9);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let c = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0); 4]).unwrap();
        assert!(matches!(d_pca(&c, &c), Err(Error::DegenerateCluster(_))));
        assert!(matches!(
            d_ppd(&c, &Point3::new(1.0, 2.0, 3.0), &c),
            Err(Error::DegenerateCluster(_))
        ));
    }

    #[test]
    fn dispersion_of_l_shape_vs_line() {
        let line: Vec<Point3> = (0..9).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let mut l: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        l.extend((1..5).map(|j| Point3::new(0.0, j as f64, 0.0)));
        // seed at the end of the L; reference of the line is its middle point
        let o = PointCloud::new(l.clone()).unwrap();
        let m = PointCloud::new(line.clone()).unwrap();
        let got = d_ppd(&o, &l[4], &m).unwrap();

        let ratio = |pts: &[Point3], r: Point3| {
            let s: Vec<f64> = pts.iter().filter(|p| **p != r).map(|p| (p - r).norm()).collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let sd = (s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / s.len() as f64).sqrt();
            let md = s.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
            sd / md
        };
        let expected = (ratio(&l, l[4]) - ratio(&line, line[4])).abs();
        assert!(got > 0.0);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn centered_part_has_zero_offset() {
        let whole: Vec<Point3> = (0..27)
            .map(|i| Point3::new((i % 3) as f64, ((i / 3) % 3) as f64 * 2.0, (i / 9) as f64 * 3.0))
            .collect();
        let part: Vec<Point3> = whole.iter().filter(|p| p.y == 2.0).copied().collect();
        let w = PointCloud::new(whole).unwrap();
        let p = PointCloud::new(part).unwrap();
        assert!(d_ccd(&w, &p, &w, &p).unwrap() < 1e-12);
    }
}
