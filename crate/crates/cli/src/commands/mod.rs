//! Command implementations.

pub mod attribute;
pub mod cv;
pub mod eval;
pub mod ingest;
pub mod synth;
pub mod train;

pub(crate) mod dataset;

use std::path::{Path, PathBuf};

use crate::CliError;
use attriblab::labels::LabelGraph;

/// Built-in pathology hierarchy, or the edge-list file when given.
pub(crate) fn resolve_hierarchy(path: Option<&Path>) -> Result<LabelGraph, CliError> {
    match path {
        None => Ok(LabelGraph::default_pathology()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Usage(format!("cannot read hierarchy {}: {e}", p.display()))
            })?;
            Ok(LabelGraph::from_edge_list(&text)?)
        }
    }
}

pub(crate) fn require_manifest(path: &Option<PathBuf>) -> Result<&Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage("a manifest is required (--manifest or config)".into()))
}

pub(crate) fn require_out_dir(path: &Option<PathBuf>) -> Result<&Path, CliError> {
    path.as_deref().ok_or_else(|| {
        CliError::Usage("an output directory is required (--out-dir or config)".into())
    })
}

pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

/// Refuses to clobber existing files unless `--force` was given.
pub(crate) fn guarded_write(path: &Path, bytes: &[u8], force: bool) -> Result<(), CliError> {
    if !force && path.exists() {
        return Err(CliError::Usage(format!(
            "refusing to overwrite {} (pass --force to allow)",
            path.display()
        )));
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
