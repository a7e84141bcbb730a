//! The end-to-end study: cohorts, pretraining, transfer, and where each
//! artifact lives under the output directory.

use std::path::{Path, PathBuf};

use crate::cohort::{
    generate_downstream_cohort, generate_pretext_cohort, read_cohort_csv, read_episodic_csv, write_cohort_csv,
    write_episodic_csv, RejectionReport,
};
use crate::config::{CertainChoice, RunConfig};
use crate::error::{GlpError, Result};
use crate::net::{load_weights, save_weights};
use crate::pipeline::{cross_validate, sweep_certain, train_final_models, write_report_json, write_sweep_csv, PretrainReport};
use crate::transfer::{run_downstream_study, write_distribution_csv, write_table_csv, DownstreamReport, ModelSet};
use crate::{EpisodicRecord, LabParameter, Patient};

pub const PRETEXT_CSV: &str = "cohort/pretext.csv";
pub const EPISODIC_CSV: &str = "cohort/episodic.csv";
pub const PRETRAIN_REPORT: &str = "pretrain_report.json";
pub const SWEEP_CSV: &str = "pretrain_sweep.csv";
pub const DOWNSTREAM_REPORT: &str = "downstream_report.json";
pub const TABLE_CSV: &str = "downstream_table.csv";
pub const DISTRIBUTION_CSV: &str = "progress_distribution.csv";

pub fn weight_name(p: LabParameter) -> String {
    format!("weights/{}.glpw", p.csv_name().to_lowercase())
}

/// Paths under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn weight(&self, p: LabParameter) -> PathBuf {
        self.root.join(weight_name(p))
    }

    /// Every artifact the study can write, relative to the root.
    pub fn artifacts(&self) -> Vec<String> {
        let mut v: Vec<String> = [PRETEXT_CSV, EPISODIC_CSV].map(String::from).to_vec();
        v.extend(LabParameter::ALL.map(weight_name));
        v.extend([PRETRAIN_REPORT, SWEEP_CSV, DOWNSTREAM_REPORT, TABLE_CSV, DISTRIBUTION_CSV].map(String::from));
        v
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(GlpError::MissingArtifact(path.to_path_buf()))
    }
}

fn log_rejections(kind: &str, report: &RejectionReport) {
    if !report.is_empty() {
        log::warn!("{kind}: {} rows and {} patients rejected", report.rows.len(), report.patients.len());
        for r in report.rows.iter().chain(&report.patients).take(20) {
            log::warn!("  line {} {}: {}", r.line, r.patient_id, r.reason);
        }
    }
}

/// The configured pretext CSV, or a generated cohort.
pub fn pretext_cohort(config: &RunConfig) -> Result<Vec<Patient>> {
    let Some(path) = &config.pretext_csv else {
        return generate_pretext_cohort(&config.generator_spec());
    };
    require(path)?;
    let (patients, rejected) = read_cohort_csv(path)?;
    log_rejections("pretext cohort", &rejected);
    if patients.is_empty() {
        return Err(GlpError::Domain(format!("{}: no valid patients", path.display())));
    }
    Ok(patients)
}

/// The configured episodic CSV, or a generated cohort.
pub fn episodic_cohort(config: &RunConfig) -> Result<Vec<EpisodicRecord>> {
    let Some(path) = &config.episodic_csv else {
        return generate_downstream_cohort(&config.downstream_spec());
    };
    require(path)?;
    let (records, rejected) = read_episodic_csv(path)?;
    log_rejections("episodic cohort", &rejected);
    Ok(records)
}

pub fn synth(config: &RunConfig, layout: &Layout) -> Result<()> {
    let (pretext, episodic) = (pretext_cohort(config)?, episodic_cohort(config)?);
    let path = layout.path(PRETEXT_CSV);
    create_parent(&path)?;
    write_cohort_csv(&pretext, &path)?;
    write_episodic_csv(&episodic, layout.path(EPISODIC_CSV))?;
    log::info!("wrote {} pretext patients and {} episodic records", pretext.len(), episodic.len());
    Ok(())
}

/// Cross-validate (or sweep), then train and save the six final models with
/// each parameter's chosen certain.
pub fn pretrain(config: &RunConfig, layout: &Layout) -> Result<PretrainReport> {
    let patients = pretext_cohort(config)?;
    let cfg = config.train_config();
    let report = match config.certain {
        CertainChoice::Fixed(_) => cross_validate(&patients, &cfg)?,
        CertainChoice::Sweep => sweep_certain(&patients, &cfg)?,
    };
    let mut chosen = [0u8; 6];
    for p in &report.parameters {
        chosen[p.parameter.index()] = p.certain;
    }
    log::info!("{} mean R2 {:.4}, certain {:?}", cfg.method, report.mean_r2, chosen);
    let outcomes = train_final_models(&patients, &cfg, &chosen)?;
    for (p, outcome) in LabParameter::ALL.into_iter().zip(&outcomes) {
        let path = layout.weight(p);
        create_parent(&path)?;
        save_weights(&outcome.model, &path)?;
    }
    write_report_json(&report, layout.path(PRETRAIN_REPORT))?;
    write_sweep_csv(&report, layout.path(SWEEP_CSV))?;
    Ok(report)
}

pub fn load_models(layout: &Layout) -> Result<ModelSet> {
    let models = LabParameter::ALL
        .into_iter()
        .map(|p| {
            let path = layout.weight(p);
            require(&path)?;
            let model = load_weights(&path)?;
            model.expect_parameter(p)?;
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelSet::new(models)
}

/// The downstream study on the saved weights. Fails if a weight file changes
/// while it runs.
pub fn transfer(config: &RunConfig, layout: &Layout) -> Result<DownstreamReport> {
    let models = load_models(layout)?;
    let on_disk = LabParameter::ALL.map(|p| std::fs::read(layout.weight(p)));
    let records = episodic_cohort(config)?;
    let (report, features) = run_downstream_study(&models, &records, &config.study, config.seeds().downstream_study)?;
    for (p, before) in LabParameter::ALL.into_iter().zip(on_disk) {
        if std::fs::read(layout.weight(p))? != before? {
            return Err(GlpError::Training(format!("weight file for {p} changed during transfer")));
        }
    }
    write_report_json(&report, layout.path(DOWNSTREAM_REPORT))?;
    write_table_csv(&report, layout.path(TABLE_CSV))?;
    write_distribution_csv(&features, layout.path(DISTRIBUTION_CSV))?;
    Ok(report)
}

/// synth, pretrain and transfer in sequence.
pub fn run_all(config: &RunConfig, layout: &Layout) -> Result<(PretrainReport, DownstreamReport)> {
    synth(config, layout)?;
    let pretrain_report = pretrain(config, layout)?;
    Ok((pretrain_report, transfer(config, layout)?))
}
