//! File formats, experiment configuration and the experiment runner.

mod config;
mod dataset;
mod maps;
mod pnm;
mod runner;

pub use config::{DatasetSource, ExperimentConfig, Method, Task};
pub use dataset::{read_archive, write_identity_archive, write_shapes_archive, Archive, MANIFEST};
pub use maps::{map_byte, overlay, overlay_image, read_attribution_csv, write_attribution, AttributionFiles};
pub use pnm::{decode_pnm, encode_pnm, read_image, write_image};
pub use runner::{
    output_root, resolve_output_dir, run_experiment, run_sweep, MetricRow, RunReport, RuntimeRow, SweepPreset,
    OUTPUT_ROOT_ENV,
};

use std::path::{Path, PathBuf};

use crate::netcore::NetError;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    /// Runtime failure with the stage and item it happened in.
    #[error("stage `{stage}`, item `{item}`: {source}")]
    Stage {
        stage: String,
        item: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Net(#[from] NetError),
}

impl IoError {
    /// Errors that stem from the configuration rather than from running it.
    pub fn is_config_error(&self) -> bool {
        matches!(self, IoError::Config { .. } | IoError::Syntax { .. })
    }

    pub(crate) fn at_path(self, path: &Path) -> Self {
        match self {
            IoError::Format(msg) => IoError::Format(format!("{}: {msg}", path.display())),
            other => other,
        }
    }

    pub(crate) fn stage(
        stage: &str,
        item: impl Into<String>,
        source: impl std::error::Error + Send + Sync + 'static,
    ) -> Self {
        IoError::Stage {
            stage: stage.to_string(),
            item: item.into(),
            source: Box::new(source),
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| IoError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}
