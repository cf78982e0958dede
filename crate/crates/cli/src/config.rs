use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tog_core::geometry::{RigidTransform, DEFAULT_LEAF};
use tog_core::ontology::{ChatClient, FixtureClient, HttpChatClient, OntologyGraph};
use tog_core::template_db::GripperConfig;
use tog_core::{Error, Result};

/// Where model responses come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChatBackend {
    /// Recorded responses keyed by prompt hash.
    Fixtures(PathBuf),
    /// Endpoint, key and model taken from the environment.
    Http,
}

impl ChatBackend {
    pub fn client(&self) -> Result<Box<dyn ChatClient>> {
        Ok(match self {
            ChatBackend::Fixtures(dir) => Box::new(FixtureClient::from_dir(dir)),
            ChatBackend::Http => Box::new(HttpChatClient::from_env()?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub db: PathBuf,
    /// `None` selects the built-in household ontology.
    pub ontology: Option<PathBuf>,
    pub leaf: f64,
    pub gripper: GripperConfig,
    /// Upper bound on templates registered per query.
    pub template_cap: Option<usize>,
    pub chat: ChatBackend,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.leaf > 0.0 && self.leaf.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "leaf must be positive, got {}",
                self.leaf
            )));
        }
        if self.template_cap == Some(0) {
            return Err(Error::InvalidArgument("template cap must be at least 1".into()));
        }
        self.gripper.validate()?;
        require_path(&self.db)?;
        if let Some(p) = &self.ontology {
            require_path(p)?;
        }
        if let ChatBackend::Fixtures(dir) = &self.chat {
            require_path(dir)?;
        }
        Ok(())
    }

    pub fn ontology_graph(&self) -> Result<OntologyGraph> {
        match &self.ontology {
            Some(p) => OntologyGraph::load(p),
            None => Ok(OntologyGraph::household()),
        }
    }
}

fn require_path(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "path does not exist"),
        ))
    }
}

/// Lowest-precedence settings, read from a JSON file. Relative paths are
/// taken relative to the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub db: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub leaf: Option<f64>,
    pub gripper: Option<GripperConfig>,
    pub template_cap: Option<usize>,
    pub fixtures: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let mut file: ConfigFile = read_json(path)?;
        if let Some(v) = file.schema_version {
            if v != crate::SCHEMA_VERSION {
                return Err(Error::Schema(format!(
                    "{}: unsupported schema_version {v}",
                    path.display()
                )));
            }
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut file.db, &mut file.ontology, &mut file.fixtures]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// Settings given on the command line or through the environment; unset
/// fields fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub db: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub leaf: Option<f64>,
    pub gripper: Option<PathBuf>,
    pub template_cap: Option<usize>,
    pub fixtures: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn resolve(&self, file: Option<&ConfigFile>) -> Result<PipelineConfig> {
        let file = file.cloned().unwrap_or_default();
        let db =
            self.db.clone().or(file.db).ok_or_else(|| {
                Error::InvalidArgument("no template database given (--db, TOG_DB or config file)".into())
            })?;
        let gripper = match &self.gripper {
            Some(p) => load_gripper(p)?,
            None => file.gripper.unwrap_or_default(),
        };
        let chat = match self.fixtures.clone().or(file.fixtures) {
            Some(dir) => ChatBackend::Fixtures(dir),
            None => ChatBackend::Http,
        };
        Ok(PipelineConfig {
            db,
            ontology: self.ontology.clone().or(file.ontology),
            leaf: self.leaf.or(file.leaf).unwrap_or(DEFAULT_LEAF),
            gripper,
            template_cap: self.template_cap.or(file.template_cap),
            chat,
            seed: self.seed.or(file.seed).unwrap_or(0),
        })
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))
}

pub fn load_gripper(path: &Path) -> Result<GripperConfig> {
    let g: GripperConfig = read_json(path)?;
    g.validate()?;
    Ok(g)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoseFile {
    Wrapped { pose: RigidTransform },
    Bare(RigidTransform),
}

/// Camera pose as `{"pose": [[..4]; 4]}` or a bare 4x4 row-major array.
pub fn load_pose(path: &Path) -> Result<RigidTransform> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match serde_json::from_str::<PoseFile>(&text) {
        Ok(PoseFile::Wrapped { pose } | PoseFile::Bare(pose)) => Ok(pose),
        Err(e) => Err(Error::parse(
            path.display().to_string(),
            format!("expected a 4x4 row-major rigid transform: {e}"),
        )),
    }
}
