//! Locating a functional part in an observed cloud: every point seeds a
//! k-nearest-neighbor cluster that is scored against the matching part of
//! each template; the seed with the lowest mean score wins.

mod metrics;

use rayon::prelude::*;
use serde::Serialize;

pub use metrics::{cluster_size_from_counts, d_ccd, d_pca, d_ppd};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, PointCloud, PrincipalFrame, Vector3};
use crate::template_db::Template;
use metrics::{center_offset_ratio, center_offset_ratio_local, dispersion_ratio, reference_index, unit_spectrum};

/// Neighbor count used when matching `o_all` against `part_path` of `template`.
pub fn cluster_size(o_all: &PointCloud, template: &Template, part_path: &str) -> Result<usize> {
    let part = template
        .part_cloud(part_path)
        .ok_or_else(|| Error::InvalidArgument(format!("template `{}` has no part `{part_path}`", template.id)))?;
    cluster_size_from_counts(o_all.len(), part.len(), template.full_cloud.len())
}

/// A seed-centered cluster and its scores against one template part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterCandidate {
    pub seed_index: usize,
    pub members: Vec<usize>,
    pub d_pca: f64,
    pub d_ppd: f64,
    pub d_ccd: f64,
    pub d: f64,
}

/// Scores of the winning seed's cluster against one template.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateScore {
    pub template_id: String,
    pub k: usize,
    pub d_pca: f64,
    pub d_ppd: f64,
    pub d_ccd: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognitionResult {
    #[serde(skip)]
    pub part_cloud: PointCloud,
    pub seed_index: usize,
    pub seed: Point3,
    pub member_indices: Vec<usize>,
    /// Mean of `d` over templates at the winning seed.
    pub mean_d: f64,
    pub per_template_scores: Vec<TemplateScore>,
    pub winning_template_for_cluster: String,
}

/// Seed-independent template quantities.
struct PartModel<'a> {
    id: &'a str,
    k: usize,
    spectrum: Vector3,
    dispersion: f64,
    offset: f64,
}

impl<'a> PartModel<'a> {
    fn new(o_len: usize, template: &'a Template, part: &PointCloud) -> Result<Self> {
        let whole = template.full_cloud.points();
        let pts = part.points();
        if pts.len() < 3 {
            return Err(Error::DegenerateTemplate(format!(
                "part of `{}` has {} points",
                template.id,
                pts.len()
            )));
        }
        let degenerate = |e: Error| Error::DegenerateTemplate(format!("`{}`: {e}", template.id));
        let frame = PrincipalFrame::of_points(whole)?;
        Ok(Self {
            id: &template.id,
            k: cluster_size_from_counts(o_len, pts.len(), whole.len())?,
            spectrum: unit_spectrum(pts).map_err(degenerate)?,
            dispersion: dispersion_ratio(pts, reference_index(pts)?).map_err(degenerate)?,
            offset: center_offset_ratio(&frame, whole, pts).map_err(degenerate)?,
        })
    }
}

/// Observed-cloud quantities shared by all seeds.
struct Observed<'a> {
    points: &'a [Point3],
    local: Vec<Point3>,
    whole_box: Aabb,
}

impl<'a> Observed<'a> {
    fn new(cloud: &'a PointCloud) -> Result<Self> {
        let points = cloud.points();
        let frame = PrincipalFrame::of_points(points)?;
        let local: Vec<Point3> = points.iter().map(|p| Point3::from(frame.to_local(p))).collect();
        let whole_box = Aabb::of_points(&local)?;
        Ok(Self {
            points,
            local,
            whole_box,
        })
    }

    /// (d_pca, d_ppd, d_ccd) of the cluster `members` seeded at `seed`.
    fn score(&self, seed: usize, members: &[usize], model: &PartModel) -> Result<[f64; 3]> {
        let pts: Vec<Point3> = members.iter().map(|&i| self.points[i]).collect();
        let seed_pos = members
            .iter()
            .position(|&i| i == seed)
            .ok_or(Error::DegenerateCluster("seed outside its cluster"))?;
        let pca = (unit_spectrum(&pts)? - model.spectrum).norm();
        let ppd = (dispersion_ratio(&pts, seed_pos)? - model.dispersion).abs();
        let ccd =
            (center_offset_ratio_local(&self.whole_box, members.iter().map(|&i| self.local[i]))? - model.offset).abs();
        Ok([pca, ppd, ccd])
    }
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateCluster(_) | Error::InsufficientPoints { .. })
}

/// Scores the cluster seeded at `seed_index` against one template part.
pub fn score_cluster(
    o_all: &PointCloud,
    seed_index: usize,
    template: &Template,
    part_path: &str,
) -> Result<ClusterCandidate> {
    if seed_index >= o_all.len() {
        return Err(Error::InvalidArgument(format!("seed index {seed_index} out of range")));
    }
    let part = template
        .part_cloud(part_path)
        .ok_or_else(|| Error::InvalidArgument(format!("template `{}` has no part `{part_path}`", template.id)))?;
    let model = PartModel::new(o_all.len(), template, &part)?;
    let observed = Observed::new(o_all)?;
    let tree = o_all.kdtree();
    let members: Vec<usize> = tree
        .knn(&o_all.points()[seed_index], model.k)
        .iter()
        .map(|n| n.index)
        .collect();
    let [d_pca, d_ppd, d_ccd] = observed.score(seed_index, &members, &model)?;
    Ok(ClusterCandidate {
        seed_index,
        members,
        d_pca,
        d_ppd,
        d_ccd,
        d: d_pca + d_ppd + d_ccd,
    })
}

struct SeedOutcome {
    mean: f64,
    scores: Vec<[f64; 3]>,
}

/// Finds the cluster of `o_all` that best matches `part_path` across the
/// templates carrying that part.
pub fn recognize(o_all: &PointCloud, templates: &[Template], part_path: &str) -> Result<RecognitionResult> {
    if o_all.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            available: o_all.len(),
        });
    }
    let parts: Vec<(&Template, PointCloud)> = templates
        .iter()
        .filter_map(|t| t.part_cloud(part_path).map(|p| (t, p)))
        .collect();
    if parts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no template carries part `{part_path}`"
        )));
    }
    let models = parts
        .iter()
        .map(|(t, p)| PartModel::new(o_all.len(), t, p))
        .collect::<Result<Vec<_>>>()?;
    let observed = Observed::new(o_all)?;
    let tree = o_all.kdtree();
    let k_max = models.iter().map(|m| m.k).max().expect("at least one model");

    let outcomes: Vec<Option<SeedOutcome>> = (0..o_all.len())
        .into_par_iter()
        .map(|seed| {
            let nbrs: Vec<usize> = tree.knn(&o_all.points()[seed], k_max).iter().map(|n| n.index).collect();
            let mut scores = Vec::with_capacity(models.len());
            for m in &models {
                match observed.score(seed, &nbrs[..m.k], m) {
                    Ok(s) => scores.push(s),
                    Err(e) if is_degenerate(&e) => return None,
                    Err(e) => panic!("unexpected scoring error: {e}"),
                }
            }
            let mean = scores.iter().map(|s| s[0] + s[1] + s[2]).sum::<f64>() / scores.len() as f64;
            Some(SeedOutcome { mean, scores })
        })
        .collect();

    let (seed_index, best) = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.as_ref().map(|o| (i, o)))
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::RecognitionFailure(format!("all {} seeds gave degenerate clusters", o_all.len())))?;

    let per_template_scores: Vec<TemplateScore> = models
        .iter()
        .zip(&best.scores)
        .map(|(m, s)| TemplateScore {
            template_id: m.id.to_string(),
            k: m.k,
            d_pca: s[0],
            d_ppd: s[1],
            d_ccd: s[2],
            d: s[0] + s[1] + s[2],
        })
        .collect();
    let winner = per_template_scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.d.total_cmp(&b.1.d).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one score");
    let k = models[winner].k;
    let seed = o_all.points()[seed_index];
    let member_indices: Vec<usize> = tree.knn(&seed, k).iter().map(|n| n.index).collect();
    log::debug!(
        "recognized {part_path}: seed {seed_index}, k {k}, mean d {:.4} over {} templates",
        best.mean,
        models.len()
    );
    Ok(RecognitionResult {
        part_cloud: o_all.select(&member_indices),
        seed_index,
        seed,
        member_indices,
        mean_d: best.mean,
        winning_template_for_cluster: per_template_scores[winner].template_id.clone(),
        per_template_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template_db::GraspPose;
    use std::collections::BTreeMap;

    fn template(id: &str, cloud: PointCloud, part: &[usize]) -> Template {
        let mut parts = BTreeMap::new();
        parts.insert("handle".to_string(), cloud.select(part));
        let mut grasps: BTreeMap<String, Vec<GraspPose>> = BTreeMap::new();
        grasps.insert("handle".into(), Vec::new());
        Template {
            id: id.into(),
            object_class: "mug".into(),
            full_cloud: cloud,
            parts,
            grasps,
        }
    }

    fn blob(n: usize, seed: u64) -> PointCloud {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random::<f64>() * 0.1,
                        rng.random::<f64>() * 0.05,
                        rng.random::<f64>() * 0.02,
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn whole_object_part_selects_everything() {
        let cloud = blob(60, 1);
        let t = template("a", cloud.clone(), &(0..60).collect::<Vec<_>>());
        let r = recognize(&cloud, &[t], "handle").unwrap();
        let mut members = r.member_indices.clone();
        members.sort();
        assert_eq!(members, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn scores_sum_and_seed_membership() {
        let cloud = blob(80, 2);
        let t = template("a", blob(100, 3), &(0..30).collect::<Vec<_>>());
        let r = recognize(&cloud, std::slice::from_ref(&t), "handle").unwrap();
        assert!(r.member_indices.contains(&r.seed_index));
        for s in &r.per_template_scores {
            assert!((s.d - (s.d_pca + s.d_ppd + s.d_ccd)).abs() < 1e-12);
        }
        let c = score_cluster(&cloud, r.seed_index, &t, "handle").unwrap();
        assert_eq!(c.members, r.member_indices);
        assert!((c.d - r.mean_d).abs() < 1e-12);
    }

    #[test]
    fn missing_part_is_an_error() {
        let cloud = blob(20, 4);
        let t = template("a", cloud.clone(), &[0, 1, 2]);
        assert!(recognize(&cloud, &[t], "blade").is_err());
    }

    #[test]
    fn all_coincident_points_fail() {
        let cloud = PointCloud::new(vec![Point3::new(0.1, 0.2, 0.3); 10]).unwrap();
        let t = template("a", blob(30, 5), &(0..10).collect::<Vec<_>>());
        assert!(matches!(
            recognize(&cloud, &[t], "handle"),
            Err(Error::RecognitionFailure(_))
        ));
    }
}
