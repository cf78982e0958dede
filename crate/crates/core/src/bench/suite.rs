//! Seeded trial runner and the trial-ratio metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shapes::{generate_object, ShapeSpec, DEFAULT_DENSITY};
use super::view::{iou_3d, look_at, occluder_for_fraction, perturb, visible_indices, Perturbation};
use crate::error::{Error, Result};
use crate::geometry::{
    aabb, apply_transform, voxel_downsample, Point3, PointCloud, RigidTransform, Vector3, DEFAULT_LEAF,
};
use crate::grasp::{
    check_placement, check_stick, fingers_collide, plan, split_world, transfer_grasps, AlwaysFeasible, GraspCandidate,
    PlanOptions, PlanRequest,
};
use crate::ontology::OntologyGraph;
use crate::recognition::{recognize, RecognitionResult};
use crate::registration::{
    best_registration, derive_seed, register_all, register_direct, RegistrationConfig, RegistrationResult,
};
use crate::template_db::{build_template_with, BuildOptions, GripperConfig, Template, SCHEMA_VERSION};

/// Recognition counts as correct at or above this point-label IoU.
pub const IOU_THRESHOLD: f64 = 0.5;

/// Where the observed object comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectSource {
    /// One of the class templates itself (already downsampled).
    Template,
    /// A fresh object with perturbed shape parameters.
    #[default]
    Variant,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegistrationMode {
    /// Part alignment, rotation grid about the seed, whole-cloud refinement.
    #[default]
    LocalToGlobal,
    /// Coarse alignment plus ICP of the whole cloud.
    Direct,
}

/// One object class in a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSetup {
    /// Shape the templates are built from.
    pub shape: ShapeSpec,
    /// Shape observed objects are drawn around; defaults to `shape`.
    #[serde(default)]
    pub scene: Option<ShapeSpec>,
    /// Target part; defaults to the generator's functional part.
    #[serde(default)]
    pub part: Option<String>,
}

impl ClassSetup {
    pub fn new(shape: ShapeSpec) -> Self {
        Self {
            shape,
            scene: None,
            part: None,
        }
    }

    pub fn part(&self) -> Result<String> {
        self.part
            .clone()
            .or_else(|| self.shape.default_part().map(str::to_string))
            .ok_or_else(|| Error::Spec("class setup needs an explicit part".into()))
    }

    pub fn class(&self) -> Result<String> {
        self.shape
            .object_class()
            .map(str::to_string)
            .ok_or_else(|| Error::Spec("generator does not correspond to an ontology class".into()))
    }
}

/// Degradations applied to every trial of a suite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Condition {
    /// Share of the visible points removed by an occluder.
    pub occlusion: Option<f64>,
    pub noise_sigma: f64,
    pub smoothing: Option<f64>,
    /// Template scale factors, cycled over trials.
    pub template_scales: Vec<f64>,
}

impl Condition {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.occlusion {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Spec(format!("occlusion fraction must be in [0, 1), got {f}")));
            }
        }
        if let Some(s) = self.template_scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Spec(format!("template scale must be positive, got {s}")));
        }
        Perturbation {
            occluder: None,
            noise_sigma: self.noise_sigma,
            smoothing: self.smoothing,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    pub classes: Vec<ClassSetup>,
    /// Total trials, assigned to classes round-robin.
    pub trials: usize,
    pub templates_per_class: usize,
    /// Relative spread of template shape parameters around the class shape.
    pub template_variation: f64,
    pub source: ObjectSource,
    /// Relative spread of observed shape parameters (variant source).
    pub variation: f64,
    pub partial_view: bool,
    pub camera_distance: f64,
    /// Minimum share of the target part that must be visible from the camera.
    pub min_part_visibility: f64,
    /// Objects rest in their generated orientation with a random turn about
    /// the vertical; otherwise they take a uniformly random orientation.
    pub upright: bool,
    /// Camera elevation range above the horizon, degrees.
    pub camera_elevation_deg: [f64; 2],
    pub condition: Condition,
    pub leaf: f64,
    pub density: f64,
    pub seed: u64,
    pub registration: RegistrationMode,
    /// Stop after recognition (no registration or planning).
    pub recognition_only: bool,
    pub adjust: bool,
    pub parallel: bool,
    pub gripper: GripperConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            classes: vec![
                ClassSetup::new(ShapeSpec::mug()),
                ClassSetup::new(ShapeSpec::bottle()),
                ClassSetup::new(ShapeSpec::scissor()),
            ],
            trials: 15,
            templates_per_class: 3,
            template_variation: 0.1,
            source: ObjectSource::Variant,
            variation: 0.2,
            partial_view: true,
            camera_distance: 0.5,
            min_part_visibility: 0.25,
            upright: true,
            camera_elevation_deg: [30.0, 60.0],
            condition: Condition::default(),
            leaf: DEFAULT_LEAF,
            density: DEFAULT_DENSITY,
            seed: 0,
            registration: RegistrationMode::LocalToGlobal,
            recognition_only: false,
            adjust: true,
            parallel: true,
            gripper: GripperConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Spec("suite has no object classes".into()));
        }
        if self.templates_per_class == 0 {
            return Err(Error::Spec("templates_per_class must be at least 1".into()));
        }
        for (name, v) in [
            ("leaf", self.leaf),
            ("density", self.density),
            ("camera_distance", self.camera_distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Spec(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("variation", self.variation),
            ("template_variation", self.template_variation),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Spec(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.min_part_visibility) {
            return Err(Error::Spec("min_part_visibility must be in [0, 1]".into()));
        }
        let [lo, hi] = self.camera_elevation_deg;
        if !(0.0 <= lo && lo <= hi && hi <= 90.0) {
            return Err(Error::Spec(format!(
                "camera_elevation_deg must satisfy 0 <= low <= high <= 90, got [{lo}, {hi}]"
            )));
        }
        for c in &self.classes {
            c.shape.validate()?;
            c.class()?;
            c.part()?;
        }
        self.gripper.validate()?;
        self.condition.validate()
    }
}

/// Templates for one class: the class shape plus deterministic variants.
pub fn build_class_templates(
    setup: &ClassSetup,
    count: usize,
    variation: f64,
    leaf: f64,
    density: f64,
    gripper: &GripperConfig,
    seed: u64,
) -> Result<Vec<Template>> {
    let class = setup.class()?;
    let ontology = OntologyGraph::household();
    let class_seed = derive_seed(seed, fnv1a(class.as_bytes()));
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(class_seed, i as u64));
            let shape = if i == 0 {
                setup.shape.clone()
            } else {
                setup.shape.perturbed(variation, &mut rng)?
            };
            let cloud = generate_object(&shape, density, &mut rng)?;
            let options = BuildOptions {
                id: Some(format!("{class}-{i}")),
                ..BuildOptions::default()
            };
            build_template_with(&cloud, &class, leaf, gripper, &ontology, &options)
        })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub scene: f64,
    pub recognize: f64,
    pub register: f64,
    pub plan: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub index: usize,
    pub class: String,
    pub part: String,
    pub observed_points: usize,
    /// Share of visible points removed by the occluder.
    pub occlusion_fraction: f64,
    pub iou: f64,
    pub recognized: bool,
    /// A grasp was planned on a correctly recognized part.
    pub planned: bool,
    /// The selected grasp's closure volume holds part points only.
    pub selection_ok: bool,
    /// The selected grasp closes on the true part without finger collisions.
    pub grasp_ok: bool,
    /// The selected grasp's fingertip axis passes through the true part.
    pub stable: bool,
    pub candidates: usize,
    pub template_id: Option<String>,
    pub fitness: Option<f64>,
    /// Median distance from registered observed points to the template.
    pub residual_median: Option<f64>,
    /// Error code of the first failing stage.
    pub failure: Option<String>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub trials: usize,
    pub recognized: usize,
    pub planned: usize,
    pub selection_ok: usize,
    pub grasp_ok: usize,
    pub plan_and_grasp_ok: usize,
    pub stable: usize,
}

/// Trial ratios. Every rate except SR is over all trials; SR is over
/// executed (planned) grasps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pra: f64,
    pub gsa: f64,
    pub gsr: f64,
    pub pgsr: f64,
    pub pr: f64,
    pub sr: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSummary {
    pub mean: StageTimings,
    pub max: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub counts: Counts,
    pub metrics: Metrics,
    pub mean_occlusion_fraction: f64,
    pub runtimes: RuntimeSummary,
    pub trials: Vec<TrialReport>,
}

impl SuiteReport {
    fn from_trials(config: &SuiteConfig, trials: Vec<TrialReport>) -> Self {
        let n = trials.len();
        let count = |f: fn(&TrialReport) -> bool| trials.iter().filter(|t| f(t)).count();
        let counts = Counts {
            trials: n,
            recognized: count(|t| t.recognized),
            planned: count(|t| t.planned),
            selection_ok: count(|t| t.selection_ok),
            grasp_ok: count(|t| t.grasp_ok),
            plan_and_grasp_ok: count(|t| t.selection_ok && t.grasp_ok),
            stable: count(|t| t.stable),
        };
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let metrics = Metrics {
            pra: ratio(counts.recognized, n),
            gsa: ratio(counts.selection_ok, n),
            gsr: ratio(counts.grasp_ok, n),
            pgsr: ratio(counts.plan_and_grasp_ok, n),
            pr: ratio(counts.planned, n),
            sr: ratio(counts.stable, counts.planned),
        };
        let mut mean = StageTimings::default();
        let mut max = StageTimings::default();
        for t in &trials {
            let s = t.timings;
            for (m, x, v) in [
                (&mut mean.scene, &mut max.scene, s.scene),
                (&mut mean.recognize, &mut max.recognize, s.recognize),
                (&mut mean.register, &mut max.register, s.register),
                (&mut mean.plan, &mut max.plan, s.plan),
                (&mut mean.total, &mut max.total, s.total),
            ] {
                *m += v / n.max(1) as f64;
                *x = x.max(v);
            }
        }
        SuiteReport {
            schema_version: SCHEMA_VERSION,
            name: config.name.clone(),
            seed: config.seed,
            counts,
            metrics,
            mean_occlusion_fraction: trials.iter().map(|t| t.occlusion_fraction).sum::<f64>() / n.max(1) as f64,
            runtimes: RuntimeSummary { mean, max },
            trials,
        }
    }

    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> SuiteReport {
        let mut r = self.clone();
        r.runtimes = RuntimeSummary::default();
        for t in &mut r.trials {
            t.timings = StageTimings::default();
        }
        r
    }

    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let c = &self.counts;
        let m = &self.metrics;
        let _ = writeln!(s, "suite {} (seed {}, {} trials)", self.name, self.seed, c.trials);
        let _ = writeln!(s, "{:<6} {:>9} {:>8}", "metric", "count", "rate");
        let rows = [
            ("PRA", c.recognized, c.trials, m.pra),
            ("GSA", c.selection_ok, c.trials, m.gsa),
            ("GSR", c.grasp_ok, c.trials, m.gsr),
            ("PGSR", c.plan_and_grasp_ok, c.trials, m.pgsr),
            ("PR", c.planned, c.trials, m.pr),
            ("SR", c.stable, c.planned, m.sr),
        ];
        for (name, a, b, rate) in rows {
            let _ = writeln!(s, "{name:<6} {:>9} {:>7.1}%", format!("{a}/{b}"), 100.0 * rate);
        }
        let r = &self.runtimes.mean;
        let _ = writeln!(
            s,
            "mean seconds: scene {:.3}  recognize {:.3}  register {:.3}  plan {:.3}  total {:.3}",
            r.scene, r.recognize, r.register, r.plan, r.total
        );
        if self.mean_occlusion_fraction > 0.0 {
            let _ = writeln!(s, "mean occlusion fraction: {:.3}", self.mean_occlusion_fraction);
        }
        s
    }
}

/// Templates per class name, built once and shared across suites.
pub type TemplateSets = BTreeMap<String, Vec<Template>>;

pub fn build_template_sets(config: &SuiteConfig) -> Result<TemplateSets> {
    config.validate()?;
    let mut sets = TemplateSets::new();
    for setup in &config.classes {
        let class = setup.class()?;
        if sets.contains_key(&class) {
            continue;
        }
        let t = build_class_templates(
            setup,
            config.templates_per_class,
            config.template_variation,
            config.leaf,
            config.density,
            &config.gripper,
            config.seed,
        )?;
        sets.insert(class, t);
    }
    Ok(sets)
}

pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let sets = build_template_sets(config)?;
    run_suite_with(config, &sets)
}

/// Runs the suite against prebuilt templates. Trial failures are counted,
/// not returned.
pub fn run_suite_with(config: &SuiteConfig, sets: &TemplateSets) -> Result<SuiteReport> {
    config.validate()?;
    for setup in &config.classes {
        let class = setup.class()?;
        let have = sets.get(&class).map_or(0, Vec::len);
        if have < config.templates_per_class {
            return Err(Error::Spec(format!(
                "{have} templates for `{class}`, suite needs {}",
                config.templates_per_class
            )));
        }
    }
    let run = |i: usize| run_trial(config, sets, i);
    let trials: Vec<TrialReport> = if config.parallel {
        (0..config.trials).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..config.trials).map(run).collect::<Result<_>>()?
    };
    Ok(SuiteReport::from_trials(config, trials))
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut impl Rng) -> RigidTransform {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    RigidTransform::from_rotation(UnitQuaternion::from_quaternion(q).to_rotation_matrix())
}

/// Unit vector uniform over the band of the upper hemisphere between the
/// given elevations (degrees).
fn upper_direction(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> Vector3 {
    let z: f64 = rng.random_range(lo.to_radians().sin()..=hi.to_radians().sin());
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * a.cos(), r * a.sin(), z)
}

/// Observed scene of one trial.
pub struct Scene {
    pub class: String,
    pub part: String,
    /// Dense labeled object in the world frame.
    pub object_world: PointCloud,
    /// Camera pose in the world frame.
    pub camera: RigidTransform,
    /// Observed labeled cloud in the camera frame, at the working leaf.
    pub observed: PointCloud,
    pub occlusion_fraction: f64,
    /// Templates the observation is matched against.
    pub templates: Vec<Template>,
}

const VIEW_ATTEMPTS: usize = 50;

/// Builds the scene of trial `index`. Scene geometry depends only on the
/// master seed and the index, so conditions see the same objects and views.
pub fn build_scene(config: &SuiteConfig, sets: &TemplateSets, index: usize) -> Result<Scene> {
    let setup = &config.classes[index % config.classes.len()];
    let class = setup.class()?;
    let part = setup.part()?;
    let round = index / config.classes.len();
    let base_templates = &sets[&class][..config.templates_per_class];
    let trial_seed = derive_seed(config.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);

    let object = match config.source {
        ObjectSource::Template => base_templates[round % base_templates.len()].full_cloud.clone(),
        ObjectSource::Variant => {
            let shape = setup
                .scene
                .as_ref()
                .unwrap_or(&setup.shape)
                .perturbed(config.variation, &mut rng)?;
            generate_object(&shape, config.density, &mut rng)?
        }
    };
    let center = aabb(&object)?.center();
    let turn = if config.upright {
        RigidTransform::from_axis_angle(&Vector3::z(), rng.random_range(0.0..std::f64::consts::TAU))
    } else {
        random_rotation(&mut rng)
    };
    let pose = turn * RigidTransform::from_translation(-center.coords);
    let object_world = apply_transform(&object, &pose);
    let part_total = object_world.indices_with_label(&part).len();
    if part_total == 0 {
        return Err(Error::Spec(format!("generated `{class}` has no `{part}` points")));
    }

    let mut view = None;
    for _ in 0..VIEW_ATTEMPTS {
        let eye = Point3::from(upper_direction(&mut rng, config.camera_elevation_deg) * config.camera_distance);
        let camera = look_at(&eye, &Point3::origin(), &Vector3::z())?;
        let visible = if config.partial_view {
            object_world.select(&visible_indices(&object_world, &eye)?)
        } else {
            object_world.clone()
        };
        let seen = visible.indices_with_label(&part).len();
        if seen as f64 >= config.min_part_visibility * part_total as f64 {
            view = Some((camera, visible));
            break;
        }
    }
    let (camera, visible) =
        view.ok_or_else(|| Error::Spec(format!("no view in {VIEW_ATTEMPTS} draws shows the `{part}`")))?;

    // perturbations draw from their own stream so they do not shift the scene
    let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 1));
    let cond = &config.condition;
    let mut occluder = None;
    if let Some(fraction) = cond.occlusion {
        let eye = Point3::from(*camera.translation());
        let seen = visible.indices_with_label(&part).len();
        for _ in 0..VIEW_ATTEMPTS {
            let a = prng.random_range(0.0..std::f64::consts::TAU);
            let dir = camera.apply_vector(&Vector3::new(a.cos(), a.sin(), 0.0));
            let b = occluder_for_fraction(&visible, &eye, &dir, fraction)?;
            let kept = visible
                .indices_with_label(&part)
                .into_iter()
                .filter(|&i| !b.contains(&visible.points()[i]))
                .count();
            // fully hidden parts are out of scope; keep at least half of it
            if 2 * kept >= seen {
                occluder = Some(b);
                break;
            }
        }
        if occluder.is_none() {
            log::debug!("trial {index}: every occluder hid the {part}; running unoccluded");
        }
    }
    let perturbation = Perturbation {
        occluder,
        noise_sigma: cond.noise_sigma,
        smoothing: cond.smoothing,
    };
    let perturbed = perturb(&visible, &perturbation, &mut prng)?;
    let occlusion_fraction = match occluder {
        Some(b) => visible.points().iter().filter(|p| b.contains(p)).count() as f64 / visible.len() as f64,
        None => 0.0,
    };

    let in_camera = apply_transform(&perturbed, &camera.inverse());
    let observed = match config.source {
        ObjectSource::Template if cond.noise_sigma == 0.0 && cond.smoothing.is_none() => in_camera,
        _ => voxel_downsample(&in_camera, config.leaf)?,
    };

    let templates = if cond.template_scales.is_empty() {
        base_templates.to_vec()
    } else {
        let s = cond.template_scales[index % cond.template_scales.len()];
        base_templates
            .iter()
            .map(|t| t.scaled(s, &config.gripper))
            .collect::<Result<_>>()?
    };
    Ok(Scene {
        class,
        part,
        object_world,
        camera,
        observed,
        occlusion_fraction,
        templates,
    })
}

/// Median distance from `t(o)` to the nearest template point.
pub fn registration_residual(o_all: &PointCloud, t: &RigidTransform, template: &Template) -> f64 {
    let tree = template.full_cloud.kdtree();
    let mut d: Vec<f64> = o_all
        .points()
        .iter()
        .map(|p| tree.nearest(&t.apply(p)).expect("non-empty template").distance())
        .collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / 2.0
    }
}

/// Whether the selected grasp's closure volume holds at least one `part`
/// point of `cloud` and nothing else.
pub fn closure_holds_only(g: &GraspCandidate, cloud: &PointCloud, part: &str, gripper: &GripperConfig) -> bool {
    let in_part = cloud.indices_with_label(part);
    let mut mask = vec![false; cloud.len()];
    for &i in &in_part {
        mask[i] = true;
    }
    let part_cloud = cloud.select(&in_part);
    let rest = cloud.filter(|i, _| !mask[i]);
    check_placement(g, &part_cloud, gripper) && !check_placement(g, &rest, gripper)
}

/// Ground-truth grasp outcome: closes on the part only, and neither finger
/// body touches another part.
pub fn grasp_succeeds(g: &GraspCandidate, object_world: &PointCloud, part: &str, gripper: &GripperConfig) -> bool {
    let in_part = object_world.indices_with_label(part);
    let mut mask = vec![false; object_world.len()];
    for &i in &in_part {
        mask[i] = true;
    }
    let rest = object_world.filter(|i, _| !mask[i]);
    closure_holds_only(g, object_world, part, gripper) && !fingers_collide(g, &rest, gripper)
}

/// First transferred grasp that lands on the part without finger
/// collisions, with no stability adjustment.
pub fn first_placed_grasp(req: &PlanRequest) -> Result<GraspCandidate> {
    let best = best_registration(req.registrations).ok_or(Error::NoFeasibleGrasp)?;
    let template = req
        .templates
        .iter()
        .find(|t| t.id == best.template_id)
        .ok_or(Error::NoFeasibleGrasp)?;
    let (part, rest) = split_world(req.o_all, req.recognition, req.t0);
    transfer_grasps(template, req.part_path, best, req.t0)?
        .into_iter()
        .map(|mut g| {
            g.placement_ok = check_placement(&g, &part, req.gripper);
            g.stick_ok = check_stick(&g, &part, req.gripper);
            g
        })
        .find(|g| g.placement_ok && !fingers_collide(g, &rest, req.gripper))
        .ok_or(Error::NoFeasibleGrasp)
}

fn registrations(
    config: &SuiteConfig,
    scene: &Scene,
    o_all: &PointCloud,
    rec: &RecognitionResult,
    seed: u64,
) -> Vec<RegistrationResult> {
    let cfg = RegistrationConfig::new(config.leaf, seed);
    match config.registration {
        RegistrationMode::LocalToGlobal => register_all(o_all, rec, &scene.templates, &scene.part, &cfg)
            .into_iter()
            .filter_map(|(id, r)| r.map_err(|e| log::debug!("registration onto {id}: {e}")).ok())
            .collect(),
        RegistrationMode::Direct => scene
            .templates
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let c = RegistrationConfig {
                    seed: derive_seed(seed, i as u64),
                    ..cfg
                };
                register_direct(o_all, t, &c)
                    .map_err(|e| log::debug!("direct registration onto {}: {e}", t.id))
                    .ok()
            })
            .collect(),
    }
}

pub fn run_trial(config: &SuiteConfig, sets: &TemplateSets, index: usize) -> Result<TrialReport> {
    let start = Instant::now();
    let scene = build_scene(config, sets, index)?;
    let mut timings = StageTimings {
        scene: start.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let o_all = scene.observed.without_labels();
    let mut report = TrialReport {
        index,
        class: scene.class.clone(),
        part: scene.part.clone(),
        observed_points: o_all.len(),
        occlusion_fraction: scene.occlusion_fraction,
        iou: 0.0,
        recognized: false,
        planned: false,
        selection_ok: false,
        grasp_ok: false,
        stable: false,
        candidates: 0,
        template_id: None,
        fitness: None,
        residual_median: None,
        failure: None,
        timings,
    };
    let finish = |mut r: TrialReport, mut t: StageTimings| {
        t.total = start.elapsed().as_secs_f64();
        r.timings = t;
        Ok(r)
    };

    let t = Instant::now();
    let rec = recognize(&o_all, &scene.templates, &scene.part);
    timings.recognize = t.elapsed().as_secs_f64();
    let rec = match rec {
        Ok(r) => r,
        Err(e) => {
            report.failure = Some(e.code().to_string());
            return finish(report, timings);
        }
    };
    report.iou = iou_3d(&rec.member_indices, &scene.part, &scene.observed);
    report.recognized = report.iou >= IOU_THRESHOLD;
    if config.recognition_only || !report.recognized {
        return finish(report, timings);
    }

    let t = Instant::now();
    let regs = registrations(
        config,
        &scene,
        &o_all,
        &rec,
        derive_seed(derive_seed(config.seed, index as u64), 2),
    );
    timings.register = t.elapsed().as_secs_f64();
    let Some(best) = best_registration(&regs) else {
        report.failure = Some("registration_failure".into());
        return finish(report, timings);
    };
    let best_template = scene
        .templates
        .iter()
        .find(|t| t.id == best.template_id)
        .expect("registered template");
    report.template_id = Some(best.template_id.clone());
    report.fitness = Some(best.fitness);
    report.residual_median = Some(registration_residual(&o_all, &best.t_total, best_template));

    let t = Instant::now();
    let req = PlanRequest {
        o_all: &o_all,
        recognition: &rec,
        registrations: &regs,
        templates: &scene.templates,
        part_path: &scene.part,
        t0: &scene.camera,
        gripper: &config.gripper,
    };
    let selected = if config.adjust {
        plan(&req, &AlwaysFeasible, &PlanOptions::default()).map(|c| {
            report.candidates = c.len();
            c.into_iter().next().expect("plan returns a non-empty list")
        })
    } else {
        first_placed_grasp(&req).inspect(|_| report.candidates = 1)
    };
    timings.plan = t.elapsed().as_secs_f64();
    let g = match selected {
        Ok(g) => g,
        Err(e) => {
            report.failure = Some(e.code().to_string());
            return finish(report, timings);
        }
    };
    report.planned = true;
    let observed_world = apply_transform(&scene.observed, &scene.camera);
    let object_world = voxel_downsample(&scene.object_world, config.leaf)?;
    let part_world = object_world.select(&object_world.indices_with_label(&scene.part));
    report.selection_ok = closure_holds_only(&g, &observed_world, &scene.part, &config.gripper);
    report.grasp_ok = grasp_succeeds(&g, &object_world, &scene.part, &config.gripper);
    report.stable = check_stick(&g, &part_world, &config.gripper);
    finish(report, timings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str) -> SuiteConfig {
        SuiteConfig {
            name: name.into(),
            classes: vec![ClassSetup::new(ShapeSpec::mug())],
            trials: 2,
            templates_per_class: 2,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn seeded_suites_repeat() {
        let cfg = small("repeat");
        let sets = build_template_sets(&cfg).unwrap();
        let a = run_suite_with(&cfg, &sets).unwrap();
        let b = run_suite_with(&cfg, &sets).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
        assert_eq!(a.counts.trials, 2);
        for t in &a.trials {
            assert!(!t.grasp_ok || t.planned);
            assert!(!t.planned || t.recognized);
        }
        assert!(a.metrics.pgsr <= a.metrics.pra.min(a.metrics.gsr));
    }

    #[test]
    fn conditions_share_scenes() {
        let cfg = small("crn");
        let sets = build_template_sets(&cfg).unwrap();
        let plain = build_scene(&cfg, &sets, 1).unwrap();
        let scaled = SuiteConfig {
            condition: Condition {
                template_scales: vec![1.1],
                ..Condition::default()
            },
            ..cfg.clone()
        };
        let other = build_scene(&scaled, &sets, 1).unwrap();
        assert_eq!(plain.observed, other.observed);
        assert_eq!(plain.camera, other.camera);
        assert_ne!(plain.templates[0].full_cloud, other.templates[0].full_cloud);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = small("bad");
        cfg.condition.noise_sigma = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Spec(_))));
        let mut cfg = small("bad");
        cfg.classes = vec![ClassSetup::new(ShapeSpec::slab())];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: SuiteConfig = serde_json::from_str(r#"{"name": "x", "trials": 4}"#).unwrap();
        assert_eq!(cfg.trials, 4);
        assert_eq!(cfg.classes.len(), 3);
        assert!(serde_json::from_str::<SuiteConfig>(r#"{"trails": 4}"#).is_err());
    }
}
