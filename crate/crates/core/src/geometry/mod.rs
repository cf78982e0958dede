//! Point cloud primitives shared by every stage.

mod cloud;
pub mod io;
mod kdtree;
mod normals;
mod transform;

pub use cloud::{aabb, apply_transform, knn, pca_singular_values, voxel_downsample, Aabb, PointCloud, PrincipalFrame};
pub(crate) use cloud::{label_under, singular_values_of};
pub use kdtree::{KdTree, Neighbor};
pub use normals::{estimate_normals, local_normal, NORMAL_NEIGHBORS};
pub use transform::RigidTransform;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Operating voxel leaf size in meters.
pub const DEFAULT_LEAF: f64 = 0.005;
