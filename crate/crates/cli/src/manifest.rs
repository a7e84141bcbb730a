//! `manifest.json`: config echo, seeds, versions and artifact hashes.

use std::path::Path;

use glp::config::{ComponentSeeds, RunConfig};
use glp::study::Layout;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub weight_format_version: u16,
    pub seed: u64,
    pub seeds: ComponentSeeds,
    pub config: &'a RunConfig,
    /// External inputs named in the config.
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
}

pub fn hash_file(path: &Path, label: String) -> CliResult<Artifact> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    Ok(Artifact { path: label, bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)) })
}

/// Hash every known artifact present under the output directory.
pub fn write_manifest(config: &RunConfig, layout: &Layout, path: &Path) -> CliResult<()> {
    let artifacts = layout
        .artifacts()
        .into_iter()
        .filter(|rel| layout.root.join(rel).is_file())
        .map(|rel| hash_file(&layout.root.join(&rel), rel))
        .collect::<CliResult<Vec<_>>>()?;
    let inputs = [&config.pretext_csv, &config.episodic_csv]
        .into_iter()
        .flatten()
        .map(|p| hash_file(p, p.display().to_string()))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        weight_format_version: glp::net::FORMAT_VERSION,
        seed: config.seed,
        seeds: config.seeds(),
        config,
        inputs,
        artifacts,
    };
    glp::pipeline::write_report_json(&manifest, path)?;
    Ok(())
}
