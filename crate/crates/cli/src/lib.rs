//! Manifest-driven orchestration of the hysteresis identification study.

pub mod error;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, CliResult};
pub use manifest::ExperimentManifest;
pub use pipeline::{run_pipeline, run_stage, validate_model_file, Artifacts, Stage};

use std::path::{Path, PathBuf};

/// The command-line directory wins over the manifest's `output_dir`.
pub fn resolve_output_dir(manifest: &ExperimentManifest, cli: Option<&Path>) -> CliResult<PathBuf> {
    cli.map(Path::to_path_buf)
        .or_else(|| manifest.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --output-dir or set output_dir".into()))
}
