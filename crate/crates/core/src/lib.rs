//! Task-oriented grasping from partial point clouds.
//!
//! An instruction is resolved to a functional part through an object-part
//! ontology, the part is located in the observed cloud by multi-metric
//! template matching, and pre-planned grasps are carried over from the best
//! matching template after local-to-global registration.

pub mod bench;
pub mod error;
pub mod geometry;
pub mod grasp;
pub mod ontology;
pub mod recognition;
pub mod registration;
pub mod template_db;

pub use error::{Error, Result, Stage};
