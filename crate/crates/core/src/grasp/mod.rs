//! Carrying template grasps over to the observed object, filtering them by
//! part placement and gripper collisions, and re-centering misaligned ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, Aabb, Point3, PointCloud, RigidTransform, Vector3};
use crate::recognition::RecognitionResult;
use crate::registration::{best_registration, RegistrationResult};
use crate::template_db::{GraspPose, GripperConfig, Template};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraspCandidate {
    /// Gripper pose in the world frame (closing axis = local x, approach = local -z).
    pub pose_world: RigidTransform,
    pub width: f64,
    pub source_template: String,
    pub part_path: String,
    /// Position of the source grasp in the template's list for this part.
    pub template_index: usize,
    pub placement_ok: bool,
    pub stick_ok: bool,
    pub adjusted: bool,
    pub adjustment_vector: Vector3,
}

impl GraspCandidate {
    pub fn center(&self) -> Point3 {
        Point3::from(*self.pose_world.translation())
    }

    /// The candidate as a bare gripper pose.
    pub fn grasp_pose(&self) -> GraspPose {
        GraspPose {
            pose: self.pose_world,
            width: self.width,
        }
    }
}

/// Maps the template's grasps on `part_path` into the world: `t0 * t_total⁻¹ * g`.
pub fn transfer_grasps(
    template: &Template,
    part_path: &str,
    reg: &RegistrationResult,
    t0: &RigidTransform,
) -> Result<Vec<GraspCandidate>> {
    let grasps = template.part_grasps(part_path);
    if grasps.is_empty() {
        return Err(Error::NoGrasp(format!(
            "template `{}` has no grasps on `{part_path}`",
            template.id
        )));
    }
    let map = t0 * &reg.t_total.inverse();
    Ok(grasps
        .iter()
        .enumerate()
        .map(|(i, g)| GraspCandidate {
            pose_world: map * g.pose,
            width: g.width,
            source_template: template.id.clone(),
            part_path: part_path.to_string(),
            template_index: i,
            placement_ok: false,
            stick_ok: false,
            adjusted: false,
            adjustment_vector: Vector3::zeros(),
        })
        .collect())
}

/// Closure-volume probe: some part point lies in the closed box spanned by
/// the grasp width, the closure height and the jaw depth.
pub fn check_placement(g: &GraspCandidate, part_world: &PointCloud, gripper: &GripperConfig) -> bool {
    let pose = g.grasp_pose();
    part_world.points().iter().any(|p| pose.closure_contains(p, gripper))
}

/// Length of the fingertip axis probe: the distance between fingertip centers.
pub fn stick_length(g: &GraspCandidate, gripper: &GripperConfig) -> f64 {
    g.width + gripper.finger_thickness
}

/// Fingertip-axis probe: some part point lies in the closed cylinder of
/// radius `stick_radius` along the closing axis between the fingertips.
pub fn check_stick(g: &GraspCandidate, part_world: &PointCloud, gripper: &GripperConfig) -> bool {
    let pose = g.grasp_pose();
    part_world.points().iter().any(|p| pose.stick_contains(p, gripper))
}

/// True when any of `points` lies inside one of the two finger bodies, the
/// slabs of `finger_thickness` flanking the closure volume.
pub fn fingers_collide(g: &GraspCandidate, points: &PointCloud, gripper: &GripperConfig) -> bool {
    let pose = g.grasp_pose();
    points.points().iter().any(|p| pose.fingers_contain(p, gripper))
}

/// Neighbor count for the localized bounding box: half the part, rounded up.
pub fn lbb_neighbor_count(n: usize) -> usize {
    n.div_ceil(2)
}

/// Moves the grasp center to the center of the localized bounding box around
/// the part point nearest to it. Orientation and width are unchanged.
pub fn adjust_grasp(g: &GraspCandidate, part_world: &PointCloud) -> Result<GraspCandidate> {
    if part_world.is_empty() {
        return Err(Error::AdjustmentFailure("part cloud is empty".into()));
    }
    let tree = part_world.kdtree();
    let p_ori = g.center();
    let p_neg = part_world.points()[tree.nearest(&p_ori).expect("non-empty").index];
    let k = lbb_neighbor_count(part_world.len());
    let lbb = Aabb::of_points(tree.knn(&p_neg, k).iter().map(|n| &part_world.points()[n.index]))?;
    let shift = lbb.center() - p_ori;
    Ok(GraspCandidate {
        pose_world: g.pose_world.with_translation(g.pose_world.translation() + shift),
        adjusted: true,
        adjustment_vector: shift,
        ..g.clone()
    })
}

/// External reachability / robot-collision check applied to every candidate.
pub trait Feasibility: Sync {
    fn feasible(&self, candidate: &GraspCandidate) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysFeasible;

impl Feasibility for AlwaysFeasible {
    fn feasible(&self, _candidate: &GraspCandidate) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Every surviving candidate, best first.
    #[default]
    All,
    /// Only the first candidate that passes after adjustment.
    FirstPass,
}

#[derive(Debug, Clone, Copy)]
pub struct PlanOptions {
    pub select: Selection,
    /// Re-center grasps whose fingertip axis misses the part; when off, such
    /// grasps are dropped.
    pub adjust: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            select: Selection::All,
            adjust: true,
        }
    }
}

pub struct PlanRequest<'a> {
    /// Observed object cloud in the camera frame.
    pub o_all: &'a PointCloud,
    pub recognition: &'a RecognitionResult,
    pub registrations: &'a [RegistrationResult],
    pub templates: &'a [Template],
    pub part_path: &'a str,
    /// Camera pose in the world frame.
    pub t0: &'a RigidTransform,
    pub gripper: &'a GripperConfig,
}

/// Observed part and the remaining object points, both in the world frame.
pub fn split_world(
    o_all: &PointCloud,
    recognition: &RecognitionResult,
    t0: &RigidTransform,
) -> (PointCloud, PointCloud) {
    let mut in_part = vec![false; o_all.len()];
    for &i in &recognition.member_indices {
        in_part[i] = true;
    }
    let part = apply_transform(&recognition.part_cloud, t0);
    let rest = apply_transform(&o_all.filter(|i, _| !in_part[i]), t0);
    (part, rest)
}

/// Ordered grasp candidates on the recognized part from the best-fitting
/// template. Every returned candidate passes both probes.
pub fn plan(req: &PlanRequest, feasibility: &dyn Feasibility, options: &PlanOptions) -> Result<Vec<GraspCandidate>> {
    let best = best_registration(req.registrations)
        .ok_or_else(|| Error::RegistrationFailure("no successful registration to plan from".into()))?;
    let template = req.templates.iter().find(|t| t.id == best.template_id).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "registered template `{}` not in the database",
            best.template_id
        ))
    })?;
    let candidates = transfer_grasps(template, req.part_path, best, req.t0)?;
    let (part, rest) = split_world(req.o_all, req.recognition, req.t0);
    let gripper = req.gripper;

    let mut survivors: Vec<GraspCandidate> = candidates
        .into_par_iter()
        .filter_map(|mut g| {
            g.placement_ok = check_placement(&g, &part, gripper);
            if !g.placement_ok {
                return None;
            }
            g.stick_ok = check_stick(&g, &part, gripper);
            if !g.stick_ok {
                if !options.adjust {
                    return None;
                }
                g = adjust_grasp(&g, &part).ok()?;
                g.placement_ok = check_placement(&g, &part, gripper);
                g.stick_ok = check_stick(&g, &part, gripper);
                if !(g.placement_ok && g.stick_ok) {
                    return None;
                }
            }
            if fingers_collide(&g, &rest, gripper) || !feasibility.feasible(&g) {
                return None;
            }
            Some(g)
        })
        .collect();
    survivors.sort_by(|a, b| {
        a.adjusted
            .cmp(&b.adjusted)
            .then(a.adjustment_vector.norm().total_cmp(&b.adjustment_vector.norm()))
            .then(a.template_index.cmp(&b.template_index))
    });
    if survivors.is_empty() {
        return Err(Error::NoFeasibleGrasp);
    }
    if options.select == Selection::FirstPass {
        survivors.truncate(1);
    }
    Ok(survivors)
}
