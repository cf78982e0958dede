use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use tog_cli::config::{load_pose, read_json, ChatBackend, ConfigFile, Overrides, PipelineConfig};
use tog_cli::export::{export, Artifacts, Overlay};
use tog_cli::pipeline::{
    load_scene, load_templates, locate, recognize_stage, register_stage, run_pipeline, ErrorInfo, PipelineRequest,
};
use tog_cli::SCHEMA_VERSION;
use tog_core::bench::{
    build_class_templates, build_scene, build_template_sets, run_suite, ClassSetup, ShapeSpec, SuiteConfig,
};
use tog_core::geometry::io::{load_cloud, save_cloud};
use tog_core::geometry::RigidTransform;
use tog_core::grasp::{PlanOptions, Selection};
use tog_core::ontology::{optimize_prompt, render_prompt, resolve, Instruction, ScriptedEvaluator, TerminalEvaluator};
use tog_core::registration::best_registration;
use tog_core::template_db::{build_template_with, load_db, save_db, BuildOptions, Template};
use tog_core::{Error, Stage};

/// Task-oriented grasping from partial point clouds.
#[derive(Parser)]
#[command(name = "tog", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the commands that touch the database or ontology.
/// Flags win over environment variables, which win over the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// JSON config file with defaults for the settings below.
    #[arg(long, env = "TOG_CONFIG")]
    config: Option<PathBuf>,
    /// Template database directory.
    #[arg(long, env = "TOG_DB")]
    db: Option<PathBuf>,
    /// Ontology JSON; the built-in household ontology when unset.
    #[arg(long, env = "TOG_ONTOLOGY")]
    ontology: Option<PathBuf>,
    /// Voxel leaf size in meters.
    #[arg(long, env = "TOG_LEAF")]
    leaf: Option<f64>,
    /// Gripper geometry JSON.
    #[arg(long, env = "TOG_GRIPPER")]
    gripper: Option<PathBuf>,
    /// Register against at most this many templates.
    #[arg(long, env = "TOG_TEMPLATE_CAP")]
    template_cap: Option<usize>,
    /// Directory of recorded model responses; the HTTP endpoint is used when unset.
    #[arg(long, env = "TOG_FIXTURE_DIR")]
    fixtures: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, env = "TOG_SEED")]
    seed: Option<u64>,
}

impl Common {
    fn file(&self) -> anyhow::Result<Option<ConfigFile>> {
        Ok(match &self.config {
            Some(p) => Some(ConfigFile::load(p)?),
            None => None,
        })
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            db: self.db.clone(),
            ontology: self.ontology.clone(),
            leaf: self.leaf,
            gripper: self.gripper.clone(),
            template_cap: self.template_cap,
            fixtures: self.fixtures.clone(),
            seed: self.seed,
        }
    }

    fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let config = self.overrides().resolve(self.file()?.as_ref())?;
        config.validate()?;
        Ok(config)
    }

    /// The settings that do not need a database.
    fn standalone(&self) -> anyhow::Result<PipelineConfig> {
        let mut o = self.overrides();
        o.db.get_or_insert_with(|| PathBuf::from("."));
        Ok(o.resolve(self.file()?.as_ref())?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and inspect template databases.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Resolve instructions against the ontology.
    Ontology {
        #[command(subcommand)]
        command: OntologyCommand,
    },
    /// Locate a functional part in an observed cloud.
    Recognize(Target),
    /// Register the observation against each template of the class.
    Register(Target),
    /// Plan grasps on the part.
    Plan(PlanArgs),
    /// Plan and write PLY snapshots for a viewer.
    Export {
        #[command(flatten)]
        plan: PlanArgs,
        /// Directory for the PLY files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Instruction to grasps: resolve, recognize, register, plan.
    Run(RunArgs),
    /// Synthetic benchmark suites.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
enum DbCommand {
    /// Build templates from labeled PLY clouds and add them to a database.
    Build {
        #[arg(long)]
        class: String,
        /// Labeled cloud(s); the file stem becomes the template id.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize the templates of a database.
    Inspect {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a database of synthetic templates.
    Synth {
        #[arg(long, value_enum, num_args = 1.., required = true)]
        class: Vec<ShapeClass>,
        /// Templates per class.
        #[arg(long, default_value_t = 3)]
        count: usize,
        /// Relative shape variation between templates of a class.
        #[arg(long, default_value_t = 0.1)]
        variation: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeClass {
    Mug,
    Bottle,
    Scissor,
}

impl ShapeClass {
    fn shape(self) -> ShapeSpec {
        match self {
            ShapeClass::Mug => ShapeSpec::mug(),
            ShapeClass::Bottle => ShapeSpec::bottle(),
            ShapeClass::Scissor => ShapeSpec::scissor(),
        }
    }
}

#[derive(Subcommand)]
enum OntologyCommand {
    /// Map an instruction to an object class and part path.
    Resolve {
        #[arg(long)]
        instruction: String,
        /// Allow objects outside the ontology to map to their closest class.
        #[arg(long)]
        novel: bool,
        /// Name of the target object when the instruction does not say.
        #[arg(long)]
        class: Option<String>,
        /// Print the rendered prompt instead of querying the model.
        #[arg(long)]
        print_prompt: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Refine a prompt with a supervisor in the loop.
    Optimize {
        /// Text file holding the starting prompt.
        #[arg(long = "seed", alias = "seed-prompt")]
        seed_prompt: PathBuf,
        /// Supervisor verdicts, one per line (`accept` ends the loop); interactive when unset.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        max_rounds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "TOG_FIXTURE_DIR")]
        fixtures: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    class: String,
    #[arg(long)]
    part: String,
    /// Observed object cloud (.ply or .json), camera frame.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum SelectArg {
    #[default]
    All,
    FirstPass,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    target: Target,
    /// Camera pose in the world frame; identity when unset.
    #[arg(long)]
    camera_pose: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SelectArg::All)]
    select: SelectArg,
    /// Drop grasps that miss the part instead of re-centering them.
    #[arg(long)]
    no_adjust: bool,
}

impl PlanArgs {
    fn options(&self) -> PlanOptions {
        PlanOptions {
            select: match self.select {
                SelectArg::All => Selection::All,
                SelectArg::FirstPass => Selection::FirstPass,
            },
            adjust: !self.no_adjust,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instruction: String,
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    camera_pose: Option<PathBuf>,
    #[arg(long)]
    novel: bool,
    /// Name of the target object when the instruction does not say.
    #[arg(long)]
    class: Option<String>,
    #[arg(long, value_enum, default_value_t = SelectArg::All)]
    select: SelectArg,
    #[arg(long)]
    no_adjust: bool,
    /// Also write PLY snapshots here.
    #[arg(long)]
    export_dir: Option<PathBuf>,
    /// Include stage timings in the report.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Table,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run a suite described by a JSON config.
    Run {
        /// Suite config; built-in defaults when unset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Include per-stage timings in JSON output.
        #[arg(long)]
        timings: bool,
    },
    /// Write one synthetic observation and its camera pose.
    Scene {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trial index within the suite.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Restrict the suite to one class.
        #[arg(long, value_enum)]
        class: Option<ShapeClass>,
        /// Observed cloud, camera frame, with ground-truth part labels.
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        camera_pose: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (info, code) = match e.downcast_ref::<Error>() {
                Some(err) => (ErrorInfo::from(err), err.exit_code()),
                None => (
                    ErrorInfo {
                        code: "invalid_argument",
                        stage: None,
                        message: format!("{e:#}"),
                        exit_code: 1,
                    },
                    1,
                ),
            };
            eprintln!("error: {}", info.message);
            let body = json!({"schema_version": SCHEMA_VERSION, "error": info});
            eprintln!("{body}");
            ExitCode::from(code as u8)
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, text).map_err(|e| Error::io(path, e))?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn camera(path: Option<&Path>) -> anyhow::Result<RigidTransform> {
    Ok(match path {
        Some(p) => load_pose(p)?,
        None => RigidTransform::identity(),
    })
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Db { command } => db(command),
        Command::Ontology { command } => ontology(command),
        Command::Recognize(t) => cmd_recognize(t),
        Command::Register(t) => cmd_register(t),
        Command::Plan(p) => cmd_plan(p, None),
        Command::Export { plan, out_dir } => cmd_plan(plan, Some(out_dir)),
        Command::Run(r) => cmd_run(r),
        Command::Bench { command } => bench(command),
    }
}

#[derive(Serialize)]
struct PartSummary {
    points: usize,
    grasps: usize,
}

#[derive(Serialize)]
struct TemplateSummary {
    id: String,
    object_class: String,
    points: usize,
    parts: std::collections::BTreeMap<String, PartSummary>,
}

fn summarize(templates: &[Template]) -> serde_json::Value {
    let list: Vec<TemplateSummary> = templates
        .iter()
        .map(|t| TemplateSummary {
            id: t.id.clone(),
            object_class: t.object_class.clone(),
            points: t.full_cloud.len(),
            parts: t
                .parts
                .iter()
                .map(|(p, c)| {
                    (
                        p.clone(),
                        PartSummary {
                            points: c.len(),
                            grasps: t.grasps.get(p).map_or(0, Vec::len),
                        },
                    )
                })
                .collect(),
        })
        .collect();
    json!({"schema_version": SCHEMA_VERSION, "templates": list})
}

/// Existing database at `dir`, or an empty one.
fn existing_db(dir: &Path) -> anyhow::Result<Vec<Template>> {
    if dir.join(tog_core::template_db::DB_INDEX_FILE).exists() {
        Ok(load_db(dir)?)
    } else {
        Ok(Vec::new())
    }
}

fn merge_into_db(dir: &Path, new: Vec<Template>) -> anyhow::Result<Vec<Template>> {
    let mut all = existing_db(dir)?;
    for t in new {
        match all.iter_mut().find(|o| o.id == t.id) {
            Some(slot) => *slot = t,
            None => all.push(t),
        }
    }
    save_db(&all, dir)?;
    Ok(all)
}

fn db(command: DbCommand) -> anyhow::Result<()> {
    match command {
        DbCommand::Build {
            class,
            input,
            out,
            common,
        } => {
            let config = common.standalone()?;
            let ontology = config.ontology_graph()?;
            let mut built = Vec::new();
            for path in &input {
                let cloud = load_cloud(path)?;
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .with_context(|| format!("no usable file name in {}", path.display()))?
                    .to_string();
                let options = BuildOptions {
                    id: Some(id),
                    ..BuildOptions::default()
                };
                built.push(build_template_with(
                    &cloud,
                    &class,
                    config.leaf,
                    &config.gripper,
                    &ontology,
                    &options,
                )?);
            }
            let all = merge_into_db(&out, built)?;
            emit(&summarize(&all), None)
        }
        DbCommand::Inspect { common } => {
            let config = common.pipeline()?;
            emit(&summarize(&load_db(&config.db)?), None)
        }
        DbCommand::Synth {
            class,
            count,
            variation,
            out,
            common,
        } => {
            let config = common.standalone()?;
            let mut built = Vec::new();
            for c in class {
                let setup = ClassSetup::new(c.shape());
                built.extend(build_class_templates(
                    &setup,
                    count,
                    variation,
                    config.leaf,
                    tog_core::bench::DEFAULT_DENSITY,
                    &config.gripper,
                    config.seed,
                )?);
            }
            let all = merge_into_db(&out, built)?;
            emit(&summarize(&all), None)
        }
    }
}

fn ontology(command: OntologyCommand) -> anyhow::Result<()> {
    match command {
        OntologyCommand::Resolve {
            instruction,
            novel,
            class,
            print_prompt,
            common,
        } => {
            let config = common.standalone()?;
            let graph = config.ontology_graph()?;
            let mut instr = Instruction::new(instruction)?;
            if let Some(c) = class {
                instr = instr.with_class_hint(c);
            }
            if print_prompt {
                print!("{}", render_prompt(&graph, &instr, novel));
                return Ok(());
            }
            let client = config.chat.client()?;
            let resolved = resolve(&graph, &instr, client.as_ref(), novel).map_err(|e| e.at_stage(Stage::Resolve))?;
            emit(&json!({"schema_version": SCHEMA_VERSION, "resolved": resolved}), None)
        }
        OntologyCommand::Optimize {
            seed_prompt,
            script,
            max_rounds,
            out,
            fixtures,
        } => {
            let client = match fixtures {
                Some(dir) => ChatBackend::Fixtures(dir),
                None => ChatBackend::Http,
            }
            .client()?;
            let seed = fs::read_to_string(&seed_prompt).map_err(|e| Error::io(&seed_prompt, e))?;
            let result = match script {
                Some(path) => optimize_prompt(
                    seed.trim_end(),
                    client.as_ref(),
                    &mut ScriptedEvaluator::load(path)?,
                    max_rounds,
                ),
                None => {
                    let stdin = std::io::stdin();
                    let mut eval = TerminalEvaluator::new(stdin.lock(), std::io::stderr());
                    optimize_prompt(seed.trim_end(), client.as_ref(), &mut eval, max_rounds)
                }
            }?;
            emit(
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "prompt": result.prompt,
                    "rounds": result.rounds,
                    "transcript": result.transcript,
                }),
                out.as_deref(),
            )
        }
    }
}

fn target_inputs(t: &Target) -> anyhow::Result<(PipelineConfig, Vec<Template>, tog_core::geometry::PointCloud)> {
    let config = t.common.pipeline()?;
    let templates = load_templates(&config, &t.class, &t.part)?;
    let o_all = load_scene(&t.cloud, config.leaf)?;
    Ok((config, templates, o_all))
}

fn cmd_recognize(t: Target) -> anyhow::Result<()> {
    let (_, templates, o_all) = target_inputs(&t)?;
    let rec = recognize_stage(&o_all, &templates, &t.part)?;
    emit(
        &json!({
            "schema_version": SCHEMA_VERSION,
            "class": t.class,
            "part": t.part,
            "observed_points": o_all.len(),
            "templates": templates.iter().map(|t| &t.id).collect::<Vec<_>>(),
            "seed_index": rec.seed_index,
            "seed": rec.seed,
            "member_indices": rec.member_indices,
            "mean_d": rec.mean_d,
            "scores": rec.per_template_scores,
            "winning_template_for_cluster": rec.winning_template_for_cluster,
        }),
        t.out.as_deref(),
    )
}

fn cmd_register(t: Target) -> anyhow::Result<()> {
    let (config, templates, o_all) = target_inputs(&t)?;
    let rec = recognize_stage(&o_all, &templates, &t.part)?;
    let (entries, results) = register_stage(&o_all, &rec, &templates, &t.part, config.leaf, config.seed)?;
    let best = best_registration(&results);
    emit(
        &json!({
            "schema_version": SCHEMA_VERSION,
            "class": t.class,
            "part": t.part,
            "seed_index": rec.seed_index,
            "best_template": best.map(|b| &b.template_id),
            "best": best,
            "registrations": entries,
        }),
        t.out.as_deref(),
    )
}

fn cmd_plan(p: PlanArgs, export_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let (config, templates, o_all) = target_inputs(&p.target)?;
    let t0 = camera(p.camera_pose.as_deref())?;
    let options = p.options();
    let t = &p.target;
    let Some(dir) = export_dir else {
        let located = locate(
            &o_all,
            &templates,
            &t.part,
            &t0,
            &config.gripper,
            config.leaf,
            config.seed,
            &options,
        )?;
        return emit(
            &json!({
                "schema_version": SCHEMA_VERSION,
                "class": t.class,
                "part": t.part,
                "template": located.best.as_ref().map(|b| &b.template_id),
                "t_total": located.best.as_ref().map(|b| b.t_total),
                "grasps": located.grasps,
            }),
            t.out.as_deref(),
        );
    };

    // Export keeps going without grasps: the scene and cluster are still useful.
    let recognition = recognize_stage(&o_all, &templates, &t.part)?;
    let (grasps, overlay, note) = match locate(
        &o_all,
        &templates,
        &t.part,
        &t0,
        &config.gripper,
        config.leaf,
        config.seed,
        &options,
    ) {
        Ok(l) => {
            let overlay = l.best.as_ref().and_then(|b| {
                templates.iter().find(|m| m.id == b.template_id).map(|m| Overlay {
                    t_total: b.t_total,
                    template_cloud: m.full_cloud.clone(),
                })
            });
            (l.grasps, overlay, None)
        }
        Err(e) if matches!(e.exit_code(), 4 | 5) => (Vec::new(), None, Some(ErrorInfo::from(&e))),
        Err(e) => return Err(e.into()),
    };
    let artifacts = Artifacts {
        scene: o_all,
        t0,
        cluster: recognition.member_indices,
        overlay,
        grasps,
    };
    let files = export(&artifacts, &dir)?;
    emit(
        &json!({
            "schema_version": SCHEMA_VERSION,
            "files": files,
            "grasps": artifacts.grasps.len(),
            "planning_error": note,
        }),
        t.out.as_deref(),
    )
}

fn cmd_run(r: RunArgs) -> anyhow::Result<()> {
    let config = r.common.pipeline()?;
    let request = PipelineRequest {
        instruction: &r.instruction,
        class_hint: r.class.as_deref(),
        novel: r.novel,
        scene: &r.cloud,
        camera: camera(r.camera_pose.as_deref())?,
        options: PlanOptions {
            select: match r.select {
                SelectArg::All => Selection::All,
                SelectArg::FirstPass => Selection::FirstPass,
            },
            adjust: !r.no_adjust,
        },
        timings: r.timings,
    };
    let (report, artifacts) = run_pipeline(&config, &request)?;
    if let Some(dir) = &r.export_dir {
        export(&artifacts, dir)?;
    }
    emit(&report, r.out.as_deref())
}

fn suite_config(path: Option<&Path>) -> anyhow::Result<SuiteConfig> {
    let config: SuiteConfig = match path {
        Some(p) => read_json(p)?,
        None => SuiteConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn bench(command: BenchCommand) -> anyhow::Result<()> {
    match command {
        BenchCommand::Run {
            config,
            out,
            format,
            timings,
        } => {
            let config = suite_config(config.as_deref())?;
            let report = run_suite(&config)?;
            match format {
                Format::Table => {
                    let table = report.table();
                    match out {
                        Some(p) => fs::write(&p, table).map_err(|e| Error::io(&p, e))?,
                        None => print!("{table}"),
                    }
                    Ok(())
                }
                Format::Json if timings => emit(&report, out.as_deref()),
                Format::Json => emit(&report.without_timings(), out.as_deref()),
            }
        }
        BenchCommand::Scene {
            config,
            index,
            class,
            cloud,
            camera_pose,
        } => {
            let mut config = suite_config(config.as_deref())?;
            if let Some(c) = class {
                config.classes = vec![ClassSetup::new(c.shape())];
            }
            let sets = build_template_sets(&config)?;
            let scene = build_scene(&config, &sets, index)?;
            save_cloud(&scene.observed, &cloud)?;
            emit(
                &json!({"schema_version": SCHEMA_VERSION, "pose": scene.camera}),
                Some(&camera_pose),
            )?;
            emit(
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "class": scene.class,
                    "part": scene.part,
                    "observed_points": scene.observed.len(),
                    "cloud": cloud,
                    "camera_pose": camera_pose,
                }),
                None,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_consistent() {
        Cli::command().debug_assert();
    }
}
