use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::ontology::TranscriptEntry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a failure originated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Resolve,
    Recognize,
    LocalRegistration,
    RotationSearch,
    GlobalRefinement,
    Register,
    Plan,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Resolve => "resolve",
            Stage::Recognize => "recognize",
            Stage::LocalRegistration => "local-registration",
            Stage::RotationSearch => "rotation-search",
            Stage::GlobalRefinement => "global-refinement",
            Stage::Register => "register",
            Stage::Plan => "plan",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("insufficient points: need {needed}, have {available}")]
    InsufficientPoints { needed: usize, available: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("part `{part}` is degenerate: {points} points after downsampling (need at least {needed})")]
    DegeneratePart { part: String, points: usize, needed: usize },
    #[error("no grasp found: {0}")]
    NoGrasp(String),
    #[error("response has no Conclusion line")]
    MissingConclusion,
    #[error("unresolved part: {0}")]
    UnresolvedPart(String),
    #[error("chat client error: {0}")]
    Chat(String),
    #[error("prompt optimization incomplete after {rounds} rounds")]
    OptimizationIncomplete {
        rounds: usize,
        transcript: Vec<TranscriptEntry>,
    },
    #[error("degenerate template: {0}")]
    DegenerateTemplate(String),
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(&'static str),
    #[error("recognition failed: {0}")]
    RecognitionFailure(String),
    #[error("registration failed: {0}")]
    RegistrationFailure(String),
    #[error("coarse alignment failed: {0}")]
    CoarseFailure(String),
    #[error("local registration failed after {attempts} attempts (best: {best_correspondences} of {required} correspondences required)")]
    LocalRegistrationFailure {
        attempts: usize,
        best_correspondences: usize,
        required: usize,
        best: Option<Box<crate::geometry::RigidTransform>>,
    },
    #[error("grasp adjustment failed: {0}")]
    AdjustmentFailure(String),
    #[error("no feasible grasp survived planning")]
    NoFeasibleGrasp,
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: Stage) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error with stage wrappers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::EmptyCloud => "empty_cloud",
            Error::InsufficientPoints { .. } => "insufficient_points",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidTransform(_) => "invalid_transform",
            Error::Parse { .. } => "parse_error",
            Error::Io { .. } => "io_error",
            Error::Schema(_) => "schema_error",
            Error::DegeneratePart { .. } => "degenerate_part",
            Error::NoGrasp(_) => "no_grasp",
            Error::MissingConclusion => "missing_conclusion",
            Error::UnresolvedPart(_) => "unresolved_part",
            Error::Chat(_) => "chat_error",
            Error::OptimizationIncomplete { .. } => "optimization_incomplete",
            Error::DegenerateTemplate(_) => "degenerate_template",
            Error::DegenerateCluster(_) => "degenerate_cluster",
            Error::RecognitionFailure(_) => "recognition_failure",
            Error::RegistrationFailure(_) => "registration_failure",
            Error::CoarseFailure(_) => "coarse_failure",
            Error::LocalRegistrationFailure { .. } => "local_registration_failure",
            Error::AdjustmentFailure(_) => "adjustment_failure",
            Error::NoFeasibleGrasp => "no_feasible_grasp",
            Error::Spec(_) => "spec_error",
            Error::Stage { .. } => unreachable!("root() strips stage wrappers"),
        }
    }

    /// Process exit status used by the command-line tool.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 1 | i/o or invalid input |
    /// | 2 | instruction could not be resolved to a part |
    /// | 3 | part recognition failed |
    /// | 4 | registration failed |
    /// | 5 | no grasp could be planned |
    /// | 6 | malformed file or schema violation |
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::UnresolvedPart(_)
            | Error::MissingConclusion
            | Error::Chat(_)
            | Error::OptimizationIncomplete { .. } => 2,
            Error::RecognitionFailure(_) | Error::DegenerateCluster(_) | Error::DegenerateTemplate(_) => 3,
            Error::RegistrationFailure(_) | Error::CoarseFailure(_) | Error::LocalRegistrationFailure { .. } => 4,
            Error::NoGrasp(_) | Error::NoFeasibleGrasp | Error::AdjustmentFailure(_) => 5,
            Error::Parse { .. } | Error::Schema(_) | Error::DegeneratePart { .. } => 6,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_wrapping_keeps_root_code() {
        let err = Error::CoarseFailure("no inliers".into()).at_stage(Stage::LocalRegistration);
        assert_eq!(err.code(), "coarse_failure");
        assert_eq!(err.stage(), Some(Stage::LocalRegistration));
        assert_eq!(err.exit_code(), 4);
        // re-tagging keeps the innermost stage
        let err = err.at_stage(Stage::Register);
        assert_eq!(err.stage(), Some(Stage::LocalRegistration));
        assert!(err.to_string().starts_with("local-registration stage failed"));
    }

    #[test]
    fn unresolved_part_exits_with_two() {
        assert_eq!(Error::UnresolvedPart("bowl".into()).exit_code(), 2);
    }
}
