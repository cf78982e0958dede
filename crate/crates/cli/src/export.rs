use std::path::{Path, PathBuf};

use tog_core::geometry::io::save_ply;
use tog_core::geometry::{apply_transform, Point3, PointCloud, RigidTransform};
use tog_core::grasp::GraspCandidate;
use tog_core::Result;

pub const SCENE_FILE: &str = "scene.ply";
pub const CLUSTER_FILE: &str = "cluster.ply";
pub const OVERLAY_FILE: &str = "overlay.ply";
pub const GRASPS_FILE: &str = "grasps.ply";

pub const CLUSTER_LABEL: &str = "cluster";
pub const BACKGROUND_LABEL: &str = "background";

/// Length of each drawn gripper axis, meters.
pub const TRIAD_LENGTH: f64 = 0.03;
const TRIAD_POINTS: usize = 15;

/// Registered template shown against the observation, in the template frame.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub t_total: RigidTransform,
    pub template_cloud: PointCloud,
}

/// Everything a run produces that can be looked at in a point-cloud viewer.
#[derive(Debug, Clone)]
pub struct Artifacts {
    /// Observed cloud in the camera frame.
    pub scene: PointCloud,
    pub t0: RigidTransform,
    pub cluster: Vec<usize>,
    pub overlay: Option<Overlay>,
    pub grasps: Vec<GraspCandidate>,
}

/// Scene with every point labeled cluster or background.
pub fn cluster_cloud(scene_world: &PointCloud, members: &[usize]) -> PointCloud {
    let mut labels = vec![BACKGROUND_LABEL.to_string(); scene_world.len()];
    for &i in members {
        labels[i] = CLUSTER_LABEL.to_string();
    }
    PointCloud::with_labels(scene_world.points().to_vec(), labels).expect("one label per point")
}

/// Observation mapped by `t_total` and labeled `observed`, followed by the
/// template cloud labeled `template`.
pub fn overlay_cloud(scene: &PointCloud, overlay: &Overlay) -> PointCloud {
    apply_transform(scene, &overlay.t_total)
        .relabel("observed")
        .concat(&overlay.template_cloud.relabel("template"))
}

/// Each grasp as its center plus three point rows along the gripper axes,
/// labeled `g<i>.center`, `g<i>.x`, `g<i>.y`, `g<i>.z`.
pub fn triad_cloud(grasps: &[GraspCandidate]) -> PointCloud {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, g) in grasps.iter().enumerate() {
        let c = g.center();
        points.push(c);
        labels.push(format!("g{i}.center"));
        let r = g.pose_world.rotation();
        for (axis, name) in [(0, "x"), (1, "y"), (2, "z")] {
            let dir = r.column(axis).into_owned();
            for j in 1..=TRIAD_POINTS {
                points.push(Point3::from(
                    c.coords + dir * (TRIAD_LENGTH * j as f64 / TRIAD_POINTS as f64),
                ));
                labels.push(format!("g{i}.{name}"));
            }
        }
    }
    PointCloud::with_labels(points, labels).expect("one label per point")
}

/// Writes PLY snapshots into `dir`. Overlay and grasp files are only
/// written when there are grasps.
pub fn export(artifacts: &Artifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| tog_core::Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |cloud: &PointCloud, name: &str| -> Result<()> {
        let path = dir.join(name);
        save_ply(cloud, &path)?;
        written.push(path);
        Ok(())
    };
    let world = apply_transform(&artifacts.scene, &artifacts.t0);
    write(&world, SCENE_FILE)?;
    write(&cluster_cloud(&world, &artifacts.cluster), CLUSTER_FILE)?;
    if !artifacts.grasps.is_empty() {
        if let Some(overlay) = &artifacts.overlay {
            write(&overlay_cloud(&artifacts.scene, overlay), OVERLAY_FILE)?;
        }
        write(&triad_cloud(&artifacts.grasps), GRASPS_FILE)?;
    }
    Ok(written)
}
