//! Synthetic desk-scale evaluation: procedural objects, single-view
//! visibility, sensor-style perturbations and trial-ratio metrics.

mod shapes;
mod suite;
mod view;

pub use shapes::{generate_object, BottleParams, MugParams, ScissorParams, ShapeSpec, SlabParams, DEFAULT_DENSITY};
pub use suite::{
    build_class_templates, build_scene, build_template_sets, closure_holds_only, first_placed_grasp, grasp_succeeds,
    random_rotation, registration_residual, run_suite, run_suite_with, run_trial, ClassSetup, Condition, Counts,
    Metrics, ObjectSource, RegistrationMode, RuntimeSummary, Scene, StageTimings, SuiteConfig, SuiteReport,
    TemplateSets, TrialReport, IOU_THRESHOLD,
};
pub use view::{
    iou_3d, look_at, occluder_for_fraction, partial_view, perturb, visible_indices, OccluderBox, Perturbation,
    HPR_RADIUS_FACTOR,
};
