//! Template database: part-segmented reference clouds with pre-planned
//! antipodal grasps per part.

mod sampler;
mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use sampler::{
    is_antipodal, sample_antipodal_grasps, DEFAULT_FRICTION_HALF_ANGLE_DEG, DEFAULT_GRASPS_PER_PART,
    DUPLICATE_ANGLE_DEG, DUPLICATE_DISTANCE,
};
pub use store::{load_db, load_template, save_db, save_template, DB_INDEX_FILE, SCHEMA_VERSION, TEMPLATE_SUFFIX};

use crate::error::{Error, Result};
use crate::geometry::{aabb, label_under, voxel_downsample, Point3, PointCloud, RigidTransform, Vector3};
use crate::ontology::OntologyGraph;

/// Minimum number of points a part must keep after downsampling.
pub const MIN_PART_POINTS: usize = 10;

/// Parallel-jaw gripper geometry used by the collision probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperConfig {
    pub max_opening: f64,
    /// Finger extent along the approach axis.
    pub jaw_depth: f64,
    pub finger_thickness: f64,
    /// Finger extent along the gripper y axis.
    pub closure_height: f64,
    pub stick_radius: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self {
            max_opening: 0.085,
            jaw_depth: 0.02,
            finger_thickness: 0.008,
            closure_height: 0.02,
            stick_radius: 0.005,
        }
    }
}

impl GripperConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("max_opening", self.max_opening),
            ("jaw_depth", self.jaw_depth),
            ("finger_thickness", self.finger_thickness),
            ("closure_height", self.closure_height),
            ("stick_radius", self.stick_radius),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "gripper {name} must be positive, got {v}"
                )));
            }
        }
        if self.stick_radius >= self.max_opening / 2.0 {
            return Err(Error::InvalidArgument(
                "gripper stick_radius must be below max_opening / 2".into(),
            ));
        }
        Ok(())
    }
}

/// Gripper pose in the object frame. Local `x` is the closing axis and the
/// gripper approaches along local `-z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub pose: RigidTransform,
    pub width: f64,
}

impl GraspPose {
    pub fn center(&self) -> Point3 {
        Point3::from(*self.pose.translation())
    }

    pub fn closing_axis(&self) -> Vector3 {
        self.pose.rotation().column(0).into_owned()
    }

    pub fn approach(&self) -> Vector3 {
        -self.pose.rotation().column(2).into_owned()
    }

    /// The two contact points, `pa` on the `+x` side.
    pub fn contacts(&self) -> (Point3, Point3) {
        let c = self.center();
        let h = self.closing_axis() * (self.width / 2.0);
        (c + h, c - h)
    }

    pub fn transformed(&self, t: &RigidTransform) -> GraspPose {
        GraspPose {
            pose: t * &self.pose,
            width: self.width,
        }
    }

    /// Point expressed in the gripper frame.
    pub fn to_local(&self, p: &Point3) -> Vector3 {
        self.pose.rotation().transpose() * (p - self.center())
    }

    /// Inside the closed box spanned by the width, the closure height and the
    /// jaw depth.
    pub fn closure_contains(&self, p: &Point3, gripper: &GripperConfig) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.width / 2.0
            && l.y.abs() <= gripper.closure_height / 2.0
            && l.z.abs() <= gripper.jaw_depth / 2.0
    }

    /// Inside one of the two finger slabs flanking the closure box.
    pub fn fingers_contain(&self, p: &Point3, gripper: &GripperConfig) -> bool {
        let l = self.to_local(p);
        let hx = self.width / 2.0;
        l.x.abs() > hx
            && l.x.abs() <= hx + gripper.finger_thickness
            && l.y.abs() <= gripper.closure_height / 2.0
            && l.z.abs() <= gripper.jaw_depth / 2.0
    }

    /// Inside the cylinder of radius `stick_radius` joining the fingertip centers.
    pub fn stick_contains(&self, p: &Point3, gripper: &GripperConfig) -> bool {
        let l = self.to_local(p);
        let half = (self.width + gripper.finger_thickness) / 2.0;
        l.x.abs() <= half && l.y * l.y + l.z * l.z <= gripper.stick_radius * gripper.stick_radius
    }
}

/// A known object: downsampled labeled cloud, part clouds and grasps per part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub object_class: String,
    pub full_cloud: PointCloud,
    pub parts: BTreeMap<String, PointCloud>,
    pub grasps: BTreeMap<String, Vec<GraspPose>>,
}

impl Template {
    /// Cloud of a stored part, or the union of the stored parts below an
    /// inner ontology node (`body` covers `body.inside` and `body.outside`).
    pub fn part_cloud(&self, path: &str) -> Option<PointCloud> {
        if let Some(p) = self.parts.get(path) {
            return Some(p.clone());
        }
        let idx = self.full_cloud.indices_with_label(path);
        (!idx.is_empty()).then(|| self.full_cloud.select(&idx))
    }

    pub fn has_part(&self, path: &str) -> bool {
        self.parts.contains_key(path) || self.parts.keys().any(|k| label_under(k, path))
    }

    /// Grasps on a part, concatenated over stored sub-parts for inner nodes.
    pub fn part_grasps(&self, path: &str) -> Vec<GraspPose> {
        if let Some(g) = self.grasps.get(path) {
            return g.clone();
        }
        self.grasps
            .iter()
            .filter(|(k, _)| label_under(k, path))
            .flat_map(|(_, g)| g.iter().copied())
            .collect()
    }

    /// Copy uniformly scaled about the bounding-box center. Grasps scale with
    /// the geometry; those wider than the gripper opening are dropped.
    pub fn scaled(&self, factor: f64, gripper: &GripperConfig) -> Result<Template> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        let c = aabb(&self.full_cloud)?.center();
        let s = |p: &Point3| c + (p - c) * factor;
        let grasps = self
            .grasps
            .iter()
            .map(|(k, list)| {
                let scaled = list
                    .iter()
                    .filter(|g| g.width * factor <= gripper.max_opening)
                    .map(|g| GraspPose {
                        pose: g.pose.with_translation(s(&g.center()).coords),
                        width: g.width * factor,
                    })
                    .collect();
                (k.clone(), scaled)
            })
            .collect();
        Ok(Template {
            id: self.id.clone(),
            object_class: self.object_class.clone(),
            full_cloud: self.full_cloud.map_points(s),
            parts: self.parts.iter().map(|(k, v)| (k.clone(), v.map_points(s))).collect(),
            grasps,
        })
    }

    pub fn grasp_count(&self) -> usize {
        self.grasps.values().map(Vec::len).sum()
    }
}

/// Options for [`build_template_with`].
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub id: Option<String>,
    pub grasps_per_part: usize,
    pub friction_half_angle: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            id: None,
            grasps_per_part: DEFAULT_GRASPS_PER_PART,
            friction_half_angle: DEFAULT_FRICTION_HALF_ANGLE_DEG.to_radians(),
        }
    }
}

/// Builds a template against the built-in household ontology.
pub fn build_template(
    labeled: &PointCloud,
    object_class: &str,
    leaf: f64,
    gripper: &GripperConfig,
) -> Result<Template> {
    build_template_with(
        labeled,
        object_class,
        leaf,
        gripper,
        &OntologyGraph::household(),
        &BuildOptions::default(),
    )
}

pub fn build_template_with(
    labeled: &PointCloud,
    object_class: &str,
    leaf: f64,
    gripper: &GripperConfig,
    ontology: &OntologyGraph,
    options: &BuildOptions,
) -> Result<Template> {
    gripper.validate()?;
    let class = object_class.to_lowercase();
    if !ontology.has_class(&class) {
        return Err(Error::Schema(format!("object class `{class}` is not in the ontology")));
    }
    if labeled.labels().is_none() {
        return Err(Error::Schema("template cloud carries no part labels".into()));
    }
    let full = voxel_downsample(labeled, leaf)?;
    let labels = full.label_set();
    for l in &labels {
        if !ontology.contains_path(&class, l) {
            return Err(Error::Schema(format!(
                "part label `{l}` is not a `{class}` part in the ontology"
            )));
        }
    }

    let mut parts = BTreeMap::new();
    let mut grasps = BTreeMap::new();
    for label in labels {
        let idx: Vec<usize> = (0..full.len())
            .filter(|&i| full.label(i) == Some(label.as_str()))
            .collect();
        if idx.len() < MIN_PART_POINTS {
            return Err(Error::DegeneratePart {
                part: label,
                points: idx.len(),
                needed: MIN_PART_POINTS,
            });
        }
        let part = full.select(&idx);
        let others: Vec<Point3> = (0..full.len())
            .filter(|&i| full.label(i) != Some(label.as_str()))
            .map(|i| full.points()[i])
            .collect();
        let list = match sample_antipodal_grasps(&part, gripper, options.grasps_per_part, options.friction_half_angle) {
            // fingers may not pass through the rest of the object; grasps
            // that close on this part alone go first
            Ok(mut list) => {
                list.retain(|g| !others.iter().any(|p| g.fingers_contain(p, gripper)));
                list.sort_by_key(|g| others.iter().any(|p| g.closure_contains(p, gripper)));
                list
            }
            Err(Error::NoGrasp(msg)) => {
                log::warn!("{class}/{label}: {msg}; part kept without grasps");
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        if list.len() < options.grasps_per_part {
            log::info!("{class}/{label}: {} of {} grasps", list.len(), options.grasps_per_part);
        }
        grasps.insert(label.clone(), list);
        parts.insert(label, part);
    }

    Ok(Template {
        id: options.id.clone().unwrap_or_else(|| class.clone()),
        object_class: class,
        full_cloud: full,
        parts,
        grasps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab(label: &str) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..8 {
                pts.push(Point3::new(i as f64 * 0.005, j as f64 * 0.005, 0.0));
                pts.push(Point3::new(i as f64 * 0.005, j as f64 * 0.005, 0.02));
            }
        }
        let n = pts.len();
        PointCloud::with_labels(pts, vec![label.to_string(); n]).unwrap()
    }

    #[test]
    fn single_label_part_equals_full_cloud() {
        let t = build_template(&slab("body"), "bottle", 0.005, &GripperConfig::default()).unwrap();
        assert_eq!(t.parts.len(), 1);
        assert_eq!(t.parts["body"].points(), t.full_cloud.points());
    }

    #[test]
    fn unknown_label_is_schema_error() {
        let err = build_template(&slab("spout"), "mug", 0.005, &GripperConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn tiny_part_is_degenerate() {
        let mut cloud = slab("body");
        let extra = PointCloud::with_labels(vec![Point3::new(1.0, 1.0, 1.0)], vec!["cap".into()]).unwrap();
        cloud = cloud.concat(&extra);
        let err = build_template(&cloud, "bottle", 0.005, &GripperConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegeneratePart { points: 1, .. }));
    }

    #[test]
    fn gripper_validation() {
        assert!(GripperConfig::default().validate().is_ok());
        let bad = GripperConfig {
            stick_radius: 0.05,
            ..GripperConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn contacts_straddle_center() {
        let g = GraspPose {
            pose: RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0)),
            width: 0.04,
        };
        let (a, b) = g.contacts();
        assert!((a - Point3::new(1.02, 0.0, 0.0)).norm() < 1e-12);
        assert!((b - Point3::new(0.98, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(g.approach(), -Vector3::z());
    }

    #[test]
    fn scaling_moves_grasps_with_geometry() {
        let t = build_template(&slab("body"), "bottle", 0.005, &GripperConfig::default()).unwrap();
        let s = t.scaled(1.2, &GripperConfig::default()).unwrap();
        let c = aabb(&t.full_cloud).unwrap().center();
        for (a, b) in t.grasps["body"].iter().zip(&s.grasps["body"]) {
            assert!((b.width - a.width * 1.2).abs() < 1e-12);
            let expect = c + (a.center() - c) * 1.2;
            assert!((b.center() - expect).norm() < 1e-12);
        }
    }
}
