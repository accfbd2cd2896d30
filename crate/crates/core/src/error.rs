use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the planning pipeline.
#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate map bounds: {0}")]
    DegenerateBounds(String),

    #[error("could not snap {which} position ({x:.3}, {y:.3}) to a free grid node")]
    SnapFailed { which: &'static str, x: f64, y: f64 },

    #[error("no collision-free grid path between start and goal")]
    NoPathFound,

    #[error("corner at waypoint {index} is too tight: tangent offset {offset:.3} m exceeds half of an adjacent segment ({limit:.3} m)")]
    InfeasibleCorner { index: usize, offset: f64, limit: f64 },

    #[error("nominal surge speed {u_nom:.4} m/s exceeds the upper surge bound {u_max:.4} m/s")]
    InfeasibleSpeed { u_nom: f64, u_max: f64 },

    #[error("path parameter {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },

    #[error("inconsistent bounds: {0}")]
    InconsistentBounds(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PlanError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PlanError::SnapFailed { .. }
            | PlanError::NoPathFound
            | PlanError::InfeasibleCorner { .. }
            | PlanError::InfeasibleSpeed { .. } => 2,
            _ => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PlanError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PlanError>;
