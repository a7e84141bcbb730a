use std::path::Path;
use std::time::Instant;

use glp::config::RunConfig;
use glp::net::load_weights;
use glp::study::{self, Layout};
use glp::LabParameter;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

/// Wall-clock seconds per command, kept out of the hashed artifacts.
#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

pub struct Run<'a> {
    pub config: &'a RunConfig,
    pub layout: Layout,
    pub timings: Timings,
}

impl<'a> Run<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Self { config, layout: Layout::new(&config.out), timings: Timings::default() }
    }

    fn time(&mut self, stage: &str, f: impl FnOnce(&RunConfig, &Layout) -> glp::Result<()>) -> CliResult<()> {
        let start = Instant::now();
        f(self.config, &self.layout)?;
        let secs = start.elapsed().as_secs_f64();
        log::info!("{stage}: {secs:.1}s");
        self.timings.stages.push((stage.to_string(), secs));
        Ok(())
    }

    pub fn synth(&mut self) -> CliResult<()> {
        self.time("synth", study::synth)
    }

    pub fn pretrain(&mut self) -> CliResult<()> {
        self.time("pretrain", |c, l| study::pretrain(c, l).map(drop))
    }

    pub fn transfer(&mut self) -> CliResult<()> {
        self.time("transfer", |c, l| study::transfer(c, l).map(drop))
    }

    pub fn finish(&self) -> CliResult<()> {
        let root = &self.layout.root;
        std::fs::create_dir_all(root).map_err(CliError::io(root))?;
        crate::manifest::write_manifest(self.config, &self.layout, &root.join(MANIFEST))?;
        glp::pipeline::write_report_json(&self.timings, root.join(TIMINGS))?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyEntry {
    pub path: String,
    pub ok: bool,
    pub parameter: Option<LabParameter>,
    pub certain: Option<u8>,
    pub version: Option<u16>,
    pub checksum: Option<String>,
    pub error: Option<String>,
}

/// Check one weight file, or every `.glpw` file in a directory (or its
/// `weights/` subdirectory).
pub fn verify(path: &Path) -> CliResult<Vec<VerifyEntry>> {
    if !path.exists() {
        return Err(glp::GlpError::MissingArtifact(path.to_path_buf()).into());
    }
    let files = if path.is_dir() {
        let dir = if path.join("weights").is_dir() { path.join("weights") } else { path.to_path_buf() };
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(CliError::io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "glpw"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(glp::GlpError::MissingArtifact(dir.join("*.glpw")).into());
        }
        files
    } else {
        vec![path.to_path_buf()]
    };
    Ok(files
        .iter()
        .map(|f| {
            let path = f.display().to_string();
            match load_weights(f) {
                Ok(m) => VerifyEntry {
                    path,
                    ok: true,
                    parameter: Some(m.parameter),
                    certain: Some(m.certain),
                    version: Some(m.version),
                    checksum: Some(format!("{:08x}", m.checksum())),
                    error: None,
                },
                Err(e) => VerifyEntry {
                    path,
                    ok: false,
                    parameter: None,
                    certain: None,
                    version: None,
                    checksum: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
