use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the registration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("homography chain is numerically singular (|det| = {det:e})")]
    SingularHomography { det: f64 },

    #[error("feature support region lies outside the image")]
    SupportOutsideImage,

    #[error("all votes fell outside the translation extent; estimator is empty")]
    EmptyEstimator,

    #[error("translation slice at rotation {gamma_rad:.4} rad carries no mass")]
    UninformativeEstimator { gamma_rad: f64 },

    #[error("missing Hough space for image pair ({0}, {1})")]
    MissingSpace(usize, usize),

    #[error("relation graph is disconnected; unreachable nodes: {0:?}")]
    Disconnected(Vec<usize>),

    #[error("non-finite fitness in stage `{0}`")]
    NonFiniteFitness(&'static str),

    #[error("RANSAC failed: {0}")]
    RansacFailed(String),

    #[error("scenario infeasible: {0}")]
    InfeasibleScenario(String),

    #[error("format error in {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("image error ({path}): {msg}")]
    Image { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }

    /// Tags an error with the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
