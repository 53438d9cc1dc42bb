//! Command failures and their process exit codes.

use histair::pipeline::{PipelineError, Stage};
use histair::HistairError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NO_OBJECTS: i32 = 3;
pub const EXIT_NO_CANDIDATES: i32 = 4;
pub const EXIT_ESTIMATION: i32 = 5;
/// `eval` ran cleanly but at least one error exceeded its tolerance.
pub const EXIT_EVAL_FAIL: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Histair(#[from] HistairError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {reason}")]
    Schema { path: String, reason: String },
}

fn histair_code(e: &HistairError) -> i32 {
    match e {
        HistairError::Io { .. }
        | HistairError::Decode { .. }
        | HistairError::UnsupportedBitDepth(_)
        | HistairError::ZeroDimension { .. }
        | HistairError::BufferSize { .. } => EXIT_IO,
        HistairError::InvalidConfig(_) => EXIT_USAGE,
        HistairError::EmptyHistogram | HistairError::NoObjects(_) => EXIT_NO_OBJECTS,
        HistairError::NoCandidates | HistairError::InvalidFeature(_) => EXIT_NO_CANDIDATES,
        HistairError::Estimation { .. } => EXIT_ESTIMATION,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Histair(e) => histair_code(e),
            CliError::Pipeline(e) => match (&e.source, e.stage) {
                (HistairError::InvalidConfig(_), _) => EXIT_USAGE,
                (source, Stage::Estimate | Stage::Warp) if histair_code(source) == EXIT_IO => {
                    EXIT_ESTIMATION
                }
                (source, _) => histair_code(source),
            },
            CliError::Schema { .. } => EXIT_IO,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_IO => "io",
            EXIT_NO_OBJECTS => "no_objects",
            EXIT_NO_CANDIDATES => "no_candidates",
            _ => "estimation",
        }
    }

    /// One-line JSON object for standard error.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            stage: Option<Stage>,
            message: String,
            exit_code: i32,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        let stage = match self {
            CliError::Pipeline(e) => Some(e.stage),
            _ => None,
        };
        let body = Body {
            kind: self.kind(),
            stage,
            message: match self {
                CliError::Pipeline(e) => e.source.to_string(),
                other => other.to_string(),
            },
            exit_code: self.exit_code(),
        };
        serde_json::to_string(&Wrapper { error: body }).expect("error body serializes")
    }
}
