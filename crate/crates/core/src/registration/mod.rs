//! Local-to-global registration of an observed cloud onto a template:
//! part-level alignment, a rotation grid search about the seed, and a final
//! whole-cloud refinement.

mod fpfh;
mod icp;
mod ransac;

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

pub use fpfh::{compute_fpfh, Feature, FPFH_DIM};
pub use icp::{icp, kabsch, IcpResult, ICP_MAX_ITERATIONS, ICP_RELATIVE_TOLERANCE};
pub use ransac::{coarse_align, CoarseAlignment, RansacConfig};

use crate::error::{Error, Result, Stage};
use crate::geometry::{apply_transform, KdTree, Point3, PointCloud, RigidTransform};
use crate::recognition::RecognitionResult;
use crate::template_db::Template;

pub const LOCAL_MAX_ATTEMPTS: usize = 20;
/// Angles per axis of the rotation grid: -180° to 135° in 45° steps.
pub const ROTATION_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    pub leaf: f64,
    pub seed: u64,
    pub max_local_attempts: usize,
    pub ransac_max_iterations: usize,
}

impl RegistrationConfig {
    pub fn new(leaf: f64, seed: u64) -> Self {
        Self {
            leaf,
            seed,
            max_local_attempts: LOCAL_MAX_ATTEMPTS,
            ransac_max_iterations: 100_000,
        }
    }

    fn ransac(&self, stream: u64) -> RansacConfig {
        RansacConfig {
            max_iterations: self.ransac_max_iterations,
            ..RansacConfig::new(self.leaf, derive_seed(self.seed, stream))
        }
    }
}

/// Independent stream seed for `(master, index)` (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalAlignment {
    pub transform: RigidTransform,
    pub attempts: usize,
    pub correspondences: usize,
    pub fitness: f64,
    pub rmse: f64,
}

/// Repeats coarse alignment plus ICP of the observed part onto the template
/// part until more than half of the observed part points find a partner.
pub fn register_local(o_part: &PointCloud, m_part: &PointCloud, config: &RegistrationConfig) -> Result<LocalAlignment> {
    let required = o_part.len() / 2 + 1;
    let mut best: Option<LocalAlignment> = None;
    for attempt in 0..config.max_local_attempts {
        let coarse = match coarse_align(o_part, m_part, &config.ransac(attempt as u64)) {
            Ok(c) => c,
            Err(Error::CoarseFailure(msg)) => {
                log::debug!("local attempt {}: {msg}", attempt + 1);
                continue;
            }
            Err(e) => return Err(e),
        };
        let fine = match icp(o_part, m_part, &coarse.transform, 1.5 * config.leaf) {
            Ok(f) => f,
            Err(Error::RegistrationFailure(msg)) => {
                log::debug!("local attempt {}: {msg}", attempt + 1);
                continue;
            }
            Err(e) => return Err(e),
        };
        let candidate = LocalAlignment {
            transform: fine.transform,
            attempts: attempt + 1,
            correspondences: fine.correspondences,
            fitness: fine.fitness,
            rmse: fine.rmse,
        };
        if candidate.correspondences >= required {
            return Ok(candidate);
        }
        if best
            .as_ref()
            .is_none_or(|b| candidate.correspondences > b.correspondences)
        {
            best = Some(candidate);
        }
    }
    Err(Error::LocalRegistrationFailure {
        attempts: config.max_local_attempts,
        best_correspondences: best.as_ref().map_or(0, |b| b.correspondences),
        required,
        best: best.map(|b| Box::new(b.transform)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationSearch {
    /// Rotation about the aligned seed point.
    pub transform: RigidTransform,
    /// Euler angles in degrees (x, y, z) of the chosen candidate.
    pub angles_deg: [f64; 3],
    pub objective: f64,
    pub identity_objective: f64,
    pub candidates: usize,
}

pub fn rotation_grid_angles() -> Vec<f64> {
    (0..ROTATION_STEPS)
        .map(|i| (-180.0 + 45.0 * i as f64).to_radians())
        .collect()
}

fn nn_distance_sum(points: &[Point3], t: &RigidTransform, tree: &KdTree) -> f64 {
    points
        .iter()
        .map(|p| tree.nearest(&t.apply(p)).expect("non-empty").distance())
        .sum()
}

/// Same sum as [`nn_distance_sum`], abandoned once it exceeds `bound`.
fn nn_distance_sum_within(points: &[Point3], t: &RigidTransform, tree: &KdTree, bound: f64) -> Option<f64> {
    let mut sum = 0.0;
    for p in points {
        sum += tree.nearest(&t.apply(p)).expect("non-empty").distance();
        if sum > bound {
            return None;
        }
    }
    Some(sum)
}

/// Grid search over rotations of `t_loc(o_all)` about `t_loc(seed)` that
/// minimizes the mean nearest-neighbor distance to `m_all`.
pub fn optimize_rotation(
    o_all: &PointCloud,
    seed: &Point3,
    m_all: &PointCloud,
    t_loc: &RigidTransform,
) -> Result<RotationSearch> {
    if o_all.is_empty() || m_all.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let moved = apply_transform(o_all, t_loc);
    let pivot = t_loc.apply(seed);
    let tree = m_all.kdtree();
    let angles = rotation_grid_angles();
    let mut triples = Vec::with_capacity(angles.len().pow(3));
    for &ax in &angles {
        for &ay in &angles {
            for &az in &angles {
                triples.push([ax, ay, az]);
            }
        }
    }
    let n = moved.len() as f64;
    let identity_sum = nn_distance_sum(moved.points(), &RigidTransform::identity(), &tree);
    // Sums are non-negative, so their bit patterns order like the values.
    // A candidate is dropped only once its partial sum strictly exceeds a
    // finished one, so pruning never changes the minimum or its ties.
    let bound = AtomicU64::new(identity_sum.to_bits());
    let scored: Vec<Option<(f64, f64, RigidTransform)>> = triples
        .par_iter()
        .map(|&[ax, ay, az]| {
            let r = RigidTransform::from_euler_xyz(ax, ay, az);
            let t = RigidTransform::rotation_about(&r, &pivot);
            let limit = f64::from_bits(bound.load(Ordering::Relaxed));
            let sum = nn_distance_sum_within(moved.points(), &t, &tree, limit)?;
            bound.fetch_min(sum.to_bits(), Ordering::Relaxed);
            Some((sum, r.angle(), t))
        })
        .collect();
    let (best, (sum, _, transform)) = scored
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(i.cmp(j)))
        .expect("the identity candidate always finishes");
    Ok(RotationSearch {
        transform: *transform,
        angles_deg: triples[best].map(f64::to_degrees),
        objective: sum / n,
        identity_objective: identity_sum / n,
        candidates: scored.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationResult {
    pub template_id: String,
    pub t_loc: RigidTransform,
    pub t_opt: RigidTransform,
    pub t_icp: RigidTransform,
    /// Maps observed points into the template frame: `t_icp * t_opt * t_loc`.
    pub t_total: RigidTransform,
    pub fitness: f64,
    pub rmse: f64,
    pub correspondence_count: usize,
    pub local_attempts: usize,
    pub rotation_objective: f64,
}

/// Full local-to-global registration of `o_all` onto `template`.
pub fn register(
    o_all: &PointCloud,
    recognition: &RecognitionResult,
    template: &Template,
    part_path: &str,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let m_part = template
        .part_cloud(part_path)
        .ok_or_else(|| Error::InvalidArgument(format!("template `{}` has no part `{part_path}`", template.id)))?;
    let local =
        register_local(&recognition.part_cloud, &m_part, config).map_err(|e| e.at_stage(Stage::LocalRegistration))?;
    let rot = optimize_rotation(o_all, &recognition.seed, &template.full_cloud, &local.transform)
        .map_err(|e| e.at_stage(Stage::RotationSearch))?;
    let pre = rot.transform * local.transform;
    let fine = icp(
        &apply_transform(o_all, &pre),
        &template.full_cloud,
        &RigidTransform::identity(),
        3.0 * config.leaf,
    )
    .map_err(|e| e.at_stage(Stage::GlobalRefinement))?;
    Ok(RegistrationResult {
        template_id: template.id.clone(),
        t_loc: local.transform,
        t_opt: rot.transform,
        t_icp: fine.transform,
        t_total: fine.transform * pre,
        fitness: fine.fitness,
        rmse: fine.rmse,
        correspondence_count: fine.correspondences,
        local_attempts: local.attempts,
        rotation_objective: rot.objective,
    })
}

/// Registers against every template carrying the part, in parallel; each
/// template draws from its own random stream.
pub fn register_all(
    o_all: &PointCloud,
    recognition: &RecognitionResult,
    templates: &[Template],
    part_path: &str,
    config: &RegistrationConfig,
) -> Vec<(String, Result<RegistrationResult>)> {
    templates
        .par_iter()
        .enumerate()
        .filter(|(_, t)| t.has_part(part_path))
        .map(|(i, t)| {
            let cfg = RegistrationConfig {
                seed: derive_seed(config.seed, i as u64),
                ..*config
            };
            (t.id.clone(), register(o_all, recognition, t, part_path, &cfg))
        })
        .collect()
}

/// Highest final fitness; ties go to lower RMSE, then input order.
pub fn best_registration(results: &[RegistrationResult]) -> Option<&RegistrationResult> {
    results
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| {
            a.fitness
                .total_cmp(&b.fitness)
                .then(b.rmse.total_cmp(&a.rmse))
                .then(j.cmp(i))
        })
        .map(|(_, r)| r)
}

/// Baseline without the part-level stage: coarse alignment of the whole
/// observed cloud, then ICP.
pub fn register_direct(
    o_all: &PointCloud,
    template: &Template,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let coarse =
        coarse_align(o_all, &template.full_cloud, &config.ransac(0)).map_err(|e| e.at_stage(Stage::Register))?;
    let fine = icp(o_all, &template.full_cloud, &coarse.transform, 3.0 * config.leaf)
        .map_err(|e| e.at_stage(Stage::GlobalRefinement))?;
    let t_icp = fine.transform * coarse.transform.inverse();
    Ok(RegistrationResult {
        template_id: template.id.clone(),
        t_loc: coarse.transform,
        t_opt: RigidTransform::identity(),
        t_icp,
        t_total: fine.transform,
        fitness: fine.fitness,
        rmse: fine.rmse,
        correspondence_count: fine.correspondences,
        local_attempts: 1,
        rotation_objective: f64::NAN,
    })
}
