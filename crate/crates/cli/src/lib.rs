//! Ingestion, artifact emission and benchmarking around the decomposition
//! engines. The binary in `main.rs` is a thin argument layer over this.

pub mod bench;
pub mod emit;

use std::fs;
use std::path::Path;

use amoebot_convex::{AmoebotStructure, GridError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Read a structure from a text file with one `a b` pair per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn load_structure(path: &Path) -> Result<AmoebotStructure, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    Ok(AmoebotStructure::parse(&text)?)
}

pub fn save_structure(structure: &AmoebotStructure, path: &Path) -> std::io::Result<()> {
    fs::write(path, structure.to_text())
}
