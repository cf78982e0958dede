use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use tog_core::geometry::io::load_cloud;
use tog_core::geometry::{voxel_downsample, PointCloud, RigidTransform};
use tog_core::grasp::{plan, AlwaysFeasible, GraspCandidate, PlanOptions, PlanRequest};
use tog_core::ontology::{resolve, Instruction, ResolvedPart};
use tog_core::recognition::{recognize, RecognitionResult};
use tog_core::registration::{best_registration, register_all, RegistrationConfig, RegistrationResult};
use tog_core::template_db::{load_db, GripperConfig, Template};
use tog_core::{Error, Result, Stage};

use crate::config::PipelineConfig;
use crate::export::{Artifacts, Overlay};
use crate::SCHEMA_VERSION;

/// Machine-readable form of an error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorInfo {
    pub code: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code(),
            stage: e.stage(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

/// Outcome of registering against one template.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationEntry {
    pub template_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<RegistrationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

/// Loads an observed object cloud and brings it to the working resolution.
/// Labels in the file are ignored.
pub fn load_scene(path: &Path, leaf: f64) -> Result<PointCloud> {
    voxel_downsample(&load_cloud(path)?.without_labels(), leaf)
}

/// Templates of `class` that carry `part`, in database order, at most `cap`.
pub fn select_templates(db: Vec<Template>, class: &str, part: &str, cap: Option<usize>) -> Result<Vec<Template>> {
    let class = class.to_lowercase();
    let picked: Vec<Template> = db
        .into_iter()
        .filter(|t| t.object_class == class && t.has_part(part))
        .take(cap.unwrap_or(usize::MAX))
        .collect();
    if picked.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "the database has no `{class}` template with part `{part}`"
        )));
    }
    Ok(picked)
}

pub fn load_templates(config: &PipelineConfig, class: &str, part: &str) -> Result<Vec<Template>> {
    select_templates(load_db(&config.db)?, class, part, config.template_cap)
}

pub fn recognize_stage(o_all: &PointCloud, templates: &[Template], part: &str) -> Result<RecognitionResult> {
    recognize(o_all, templates, part).map_err(|e| e.at_stage(Stage::Recognize))
}

/// Registers against every template; fails only when none succeeds.
pub fn register_stage(
    o_all: &PointCloud,
    recognition: &RecognitionResult,
    templates: &[Template],
    part: &str,
    leaf: f64,
    seed: u64,
) -> Result<(Vec<RegistrationEntry>, Vec<RegistrationResult>)> {
    let config = RegistrationConfig::new(leaf, seed);
    let mut entries = Vec::new();
    let mut ok = Vec::new();
    for (template_id, outcome) in register_all(o_all, recognition, templates, part, &config) {
        match outcome {
            Ok(r) => {
                ok.push(r.clone());
                entries.push(RegistrationEntry {
                    template_id,
                    result: Some(r),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("registration against {template_id} failed: {e}");
                entries.push(RegistrationEntry {
                    template_id,
                    result: None,
                    error: Some(ErrorInfo::from(&e)),
                });
            }
        }
    }
    if ok.is_empty() {
        let first = entries
            .iter()
            .find_map(|e| e.error.as_ref().map(|i| i.message.clone()))
            .unwrap_or_default();
        return Err(Error::RegistrationFailure(format!("no template registered ({first})")).at_stage(Stage::Register));
    }
    Ok((entries, ok))
}

pub struct Located {
    pub recognition: RecognitionResult,
    pub registrations: Vec<RegistrationEntry>,
    pub best: Option<RegistrationResult>,
    pub grasps: Vec<GraspCandidate>,
    pub seconds: [f64; 3],
}

/// Recognition, registration and planning on one observed cloud.
#[allow(clippy::too_many_arguments)]
pub fn locate(
    o_all: &PointCloud,
    templates: &[Template],
    part: &str,
    t0: &RigidTransform,
    gripper: &GripperConfig,
    leaf: f64,
    seed: u64,
    options: &PlanOptions,
) -> Result<Located> {
    let start = Instant::now();
    let recognition = recognize_stage(o_all, templates, part)?;
    let t_rec = start.elapsed().as_secs_f64();
    let (registrations, results) = register_stage(o_all, &recognition, templates, part, leaf, seed)?;
    let t_reg = start.elapsed().as_secs_f64() - t_rec;
    let req = PlanRequest {
        o_all,
        recognition: &recognition,
        registrations: &results,
        templates,
        part_path: part,
        t0,
        gripper,
    };
    let grasps = plan(&req, &AlwaysFeasible, options).map_err(|e| e.at_stage(Stage::Plan))?;
    let t_plan = start.elapsed().as_secs_f64() - t_rec - t_reg;
    Ok(Located {
        best: best_registration(&results).cloned(),
        recognition,
        registrations,
        grasps,
        seconds: [t_rec, t_reg, t_plan],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timings {
    pub resolve: f64,
    pub recognize: f64,
    pub register: f64,
    pub plan: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub instruction: String,
    pub resolved: ResolvedPart,
    pub observed_points: usize,
    pub templates: Vec<String>,
    pub recognition: RecognitionResult,
    pub registrations: Vec<RegistrationEntry>,
    pub best_template: Option<String>,
    pub t_total: Option<RigidTransform>,
    pub grasps: Vec<GraspCandidate>,
    /// Only present on request, so that reports of identical runs are
    /// byte-identical by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

pub struct PipelineRequest<'a> {
    pub instruction: &'a str,
    pub class_hint: Option<&'a str>,
    pub novel: bool,
    pub scene: &'a Path,
    pub camera: RigidTransform,
    pub options: PlanOptions,
    pub timings: bool,
}

/// Instruction and observed cloud in, grasps plus provenance out.
pub fn run_pipeline(config: &PipelineConfig, req: &PipelineRequest) -> Result<(PipelineReport, Artifacts)> {
    config.validate()?;
    let start = Instant::now();
    let graph = config.ontology_graph()?;
    let mut instruction = Instruction::new(req.instruction)?;
    if let Some(hint) = req.class_hint {
        instruction = instruction.with_class_hint(hint);
    }
    let client = config.chat.client()?;
    let resolved = resolve(&graph, &instruction, client.as_ref(), req.novel).map_err(|e| e.at_stage(Stage::Resolve))?;
    let t_resolve = start.elapsed().as_secs_f64();
    log::info!("resolved to {} / {}", resolved.object_class, resolved.part_path);

    let templates = load_templates(config, &resolved.object_class, &resolved.part_path)?;
    let o_all = load_scene(req.scene, config.leaf)?;
    let located = locate(
        &o_all,
        &templates,
        &resolved.part_path,
        &req.camera,
        &config.gripper,
        config.leaf,
        config.seed,
        &req.options,
    )?;
    let [recognize, register, plan] = located.seconds;
    let overlay = located.best.as_ref().and_then(|b| {
        templates.iter().find(|t| t.id == b.template_id).map(|t| Overlay {
            t_total: b.t_total,
            template_cloud: t.full_cloud.clone(),
        })
    });
    let artifacts = Artifacts {
        scene: o_all.clone(),
        t0: req.camera,
        cluster: located.recognition.member_indices.clone(),
        overlay,
        grasps: located.grasps.clone(),
    };
    let report = PipelineReport {
        schema_version: SCHEMA_VERSION,
        instruction: req.instruction.to_string(),
        resolved,
        observed_points: o_all.len(),
        templates: templates.iter().map(|t| t.id.clone()).collect(),
        recognition: located.recognition,
        registrations: located.registrations,
        best_template: located.best.as_ref().map(|b| b.template_id.clone()),
        t_total: located.best.as_ref().map(|b| b.t_total),
        grasps: located.grasps,
        timings: req.timings.then(|| Timings {
            resolve: t_resolve,
            recognize,
            register,
            plan,
            total: start.elapsed().as_secs_f64(),
        }),
    };
    Ok((report, artifacts))
}
