//! Scenario runner, configuration, presets and on-disk formats for the
//! planar Landau-Lifshitz-Gilbert laboratory.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod formats;
pub mod presets;
pub mod scenario;

use llflow_core::Error as CoreError;
use std::path::{Path, PathBuf};

pub use config::{Overrides, ScenarioConfig};
pub use scenario::{run_scenario, Criterion, ScenarioOutcome};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("unknown preset `{name}`; known presets: {known}")]
    UnknownPreset { name: String, known: String },

    #[error("format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Numerical(#[from] llflow_core::Error),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }

    /// 1 for usage, configuration and rejected input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numerical(
                CoreError::InvalidGrid(_)
                | CoreError::InvalidParameter(_)
                | CoreError::ShapeMismatch(_)
                | CoreError::FarFieldMismatch { .. }
                | CoreError::Unsupported(_),
            ) => 1,
            LabError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

/// Exit status when every criterion ran but at least one failed.
pub const EXIT_CRITERION_FAILED: i32 = 3;

/// Applies `LLFLOW_THREADS` (0 or unset = rayon default) to the global pool.
pub fn init_threads() -> Result<(), LabError> {
    let n = match std::env::var("LLFLOW_THREADS") {
        Ok(v) => {
            v.trim().parse::<usize>().map_err(|_| LabError::Config(format!("LLFLOW_THREADS=`{v}` is not a count")))?
        }
        Err(_) => 0,
    };
    if n > 0 {
        // a second initialization (tests, repeated calls) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
