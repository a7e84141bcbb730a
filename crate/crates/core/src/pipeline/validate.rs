//! 80:20 splits, k-fold cross-validation and the certainty sweep.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{prepare_parameter, FrameBank};
use super::train::{evaluate_r2, train_method, MethodOutcome};
use super::{Method, TrainConfig};
use crate::cohort::{LabParameter, Patient};
use crate::error::{GlpError, Result};
use crate::framing::MAX_CERTAIN;
use crate::interp::InterpMethod;
use crate::par;
use crate::rng::{derive, rng_for};
use crate::stats::{ci95_half_width, mean};

/// Shuffle `0..n` and cut it at `round(n * ratio)`. Both halves are
/// returned sorted.
pub fn split_patients(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, "split", 0));
    let cut = ((n as f64) * ratio).round() as usize;
    let (mut train, mut test) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Contiguous folds of `train` whose sizes differ by at most one.
pub fn fold_partition(train: &[usize], folds: usize) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || train.len() < folds {
        return Err(GlpError::Config(format!("{} training patients cannot fill {folds} folds", train.len())));
    }
    let (base, extra) = (train.len() / folds, train.len() % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        out.push(train[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repetition: usize,
    pub fold: usize,
    /// R² on the held-out fold.
    pub validation_r2: f64,
    /// R² on the repetition's 20% test split.
    pub test_r2: f64,
    /// Test R² of the intermediate Stage-1 model (two-stage only).
    pub stage1_test_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub certain: u8,
    pub mean_validation_r2: f64,
    pub mean_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub parameter: LabParameter,
    pub certain: u8,
    pub folds: Vec<FoldResult>,
    /// Mean fold test R² of each repetition.
    pub repetition_r2: Vec<f64>,
    /// Mean of `repetition_r2`.
    pub mean_r2: f64,
    /// 95% CI half-width over repetitions.
    pub ci95: f64,
    /// Mean change in test R² from the Stage-1 model to the final model.
    pub stage_delta: Option<f64>,
    /// One row per certain value when a sweep was run.
    pub sweep: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub method: Method,
    pub interp: InterpMethod,
    pub seed: u64,
    pub folds: usize,
    pub repetitions: usize,
    pub split_ratio: f64,
    /// Each repetition draws a fresh 80:20 split and reseeds training.
    pub resplit_per_repetition: bool,
    pub parameters: Vec<ParameterReport>,
    /// Mean of the per-parameter `mean_r2`.
    pub mean_r2: f64,
}

struct Split {
    test: Vec<usize>,
    folds: Vec<Vec<usize>>,
}

impl Split {
    fn fold_train(&self, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.folds.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, f)| f.iter().copied()).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Copy)]
struct Job {
    parameter: usize,
    certain: u8,
    repetition: usize,
    fold: usize,
}

fn run_job(bank: &FrameBank, split: &Split, job: Job, config: &TrainConfig) -> Result<FoldResult> {
    let train_idx = split.fold_train(job.fold);
    let cfg = TrainConfig {
        certain: job.certain,
        seed: derive(config.seed, "fold", (job.repetition * config.folds + job.fold) as u64),
        ..config.clone()
    };
    let outcome = train_method(config.method, &bank.stage1(&train_idx, job.certain), &bank.stage2(&train_idx), &cfg)?;
    let validation = bank.stage2(&split.folds[job.fold]);
    let test = bank.stage2(&split.test);
    let stage1_test_r2 = outcome.stage1_model.as_ref().map(|m| evaluate_r2(m, &test)).transpose()?;
    log::debug!(
        "{} certain {} rep {} fold {} done",
        bank.parameter,
        job.certain,
        job.repetition,
        job.fold
    );
    Ok(FoldResult {
        repetition: job.repetition,
        fold: job.fold,
        validation_r2: evaluate_r2(&outcome.model, &validation)?,
        test_r2: evaluate_r2(&outcome.model, &test)?,
        stage1_test_r2,
    })
}

fn summarize(parameter: LabParameter, certain: u8, folds: Vec<FoldResult>, repetitions: usize) -> ParameterReport {
    let repetition_r2: Vec<f64> = (0..repetitions)
        .map(|r| mean(&folds.iter().filter(|f| f.repetition == r).map(|f| f.test_r2).collect::<Vec<_>>()))
        .collect();
    let deltas: Option<Vec<f64>> = folds.iter().map(|f| f.stage1_test_r2.map(|s| f.test_r2 - s)).collect();
    ParameterReport {
        parameter,
        certain,
        mean_r2: mean(&repetition_r2),
        ci95: ci95_half_width(&repetition_r2),
        stage_delta: deltas.filter(|d| !d.is_empty()).map(|d| mean(&d)),
        repetition_r2,
        folds,
        sweep: Vec::new(),
    }
}

fn run_protocol(patients: &[Patient], config: &TrainConfig, certains: &[u8]) -> Result<PretrainReport> {
    config.validate()?;
    let banks = par::map(&LabParameter::ALL, |&p| prepare_parameter(patients, p, config.interp))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let splits = (0..config.repetitions)
        .map(|r| {
            let (train, test) = split_patients(patients.len(), config.split_ratio, derive(config.seed, "repetition", r as u64));
            Ok(Split { test, folds: fold_partition(&train, config.folds)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for parameter in 0..banks.len() {
        for &certain in certains {
            for repetition in 0..config.repetitions {
                for fold in 0..config.folds {
                    jobs.push(Job { parameter, certain, repetition, fold });
                }
            }
        }
    }
    log::info!("{} {} training jobs", jobs.len(), config.method);
    let results = par::map(&jobs, |&job| run_job(&banks[job.parameter], &splits[job.repetition], job, config));
    let mut results = jobs.into_iter().zip(results).peekable();

    let mut reports = Vec::with_capacity(banks.len());
    for bank in &banks {
        let mut by_certain = Vec::with_capacity(certains.len());
        for &certain in certains {
            let mut folds = Vec::new();
            while let Some((_, r)) = results.next_if(|(j, _)| banks[j.parameter].parameter == bank.parameter && j.certain == certain) {
                folds.push(r?);
            }
            by_certain.push(summarize(bank.parameter, certain, folds, config.repetitions));
        }
        let validation: Vec<f64> = by_certain
            .iter()
            .map(|r| mean(&r.folds.iter().map(|f| f.validation_r2).collect::<Vec<_>>()))
            .collect();
        // Ties go to the smaller certain.
        let best = (0..by_certain.len()).fold(0, |b, k| if validation[k] > validation[b] { k } else { b });
        let sweep = if certains.len() > 1 {
            by_certain
                .iter()
                .zip(&validation)
                .map(|(r, &v)| SweepRow { certain: r.certain, mean_validation_r2: v, mean_r2: r.mean_r2 })
                .collect()
        } else {
            Vec::new()
        };
        let mut chosen = by_certain.swap_remove(best);
        chosen.sweep = sweep;
        reports.push(chosen);
    }
    let mean_r2 = mean(&reports.iter().map(|r| r.mean_r2).collect::<Vec<_>>());
    Ok(PretrainReport {
        method: config.method,
        interp: config.interp,
        seed: config.seed,
        folds: config.folds,
        repetitions: config.repetitions,
        split_ratio: config.split_ratio,
        resplit_per_repetition: true,
        parameters: reports,
        mean_r2,
    })
}

/// Repeated 80:20 splits with k-fold training on the 80% at `config.certain`.
pub fn cross_validate(patients: &[Patient], config: &TrainConfig) -> Result<PretrainReport> {
    run_protocol(patients, config, &[config.certain])
}

/// [`cross_validate`] for every certain in `0..=5`; each parameter keeps the
/// value with the best mean validation R².
pub fn sweep_certain(patients: &[Patient], config: &TrainConfig) -> Result<PretrainReport> {
    let certains: Vec<u8> = (0..=MAX_CERTAIN).collect();
    run_protocol(patients, config, &certains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterHoldout {
    pub parameter: LabParameter,
    pub test_r2: f64,
    pub stage1_test_r2: Option<f64>,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub method: Method,
    pub certain: u8,
    pub parameters: Vec<ParameterHoldout>,
    pub mean_r2: f64,
    pub stage1_mean_r2: Option<f64>,
}

/// One 80:20 split: train on the 80% and score Stage-2 targets of the 20%.
pub fn holdout_study(patients: &[Patient], config: &TrainConfig) -> Result<HoldoutReport> {
    config.validate()?;
    let (train, test) = split_patients(patients.len(), config.split_ratio, derive(config.seed, "repetition", 0));
    let rows = par::map(&LabParameter::ALL, |&p| -> Result<ParameterHoldout> {
        let bank = prepare_parameter(patients, p, config.interp)?;
        let out = train_method(config.method, &bank.stage1(&train, config.certain), &bank.stage2(&train), config)?;
        let test_frames = bank.stage2(&test);
        Ok(ParameterHoldout {
            parameter: p,
            test_r2: evaluate_r2(&out.model, &test_frames)?,
            stage1_test_r2: out.stage1_model.as_ref().map(|m| evaluate_r2(m, &test_frames)).transpose()?,
            epoch_losses: out.epoch_losses,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mean_r2 = mean(&rows.iter().map(|r| r.test_r2).collect::<Vec<_>>());
    let stage1: Option<Vec<f64>> = rows.iter().map(|r| r.stage1_test_r2).collect();
    Ok(HoldoutReport {
        method: config.method,
        certain: config.certain,
        stage1_mean_r2: stage1.map(|s| mean(&s)),
        parameters: rows,
        mean_r2,
    })
}

/// The six deployable models, trained on every patient with each
/// parameter's chosen certain.
pub fn train_final_models(patients: &[Patient], config: &TrainConfig, certain: &[u8; 6]) -> Result<Vec<MethodOutcome>> {
    config.validate()?;
    let all: Vec<usize> = (0..patients.len()).collect();
    par::map(&LabParameter::ALL, |&p| {
        let bank = prepare_parameter(patients, p, config.interp)?;
        let c = certain[p.index()];
        let cfg = TrainConfig { certain: c, seed: derive(config.seed, "final", 0), ..config.clone() };
        train_method(config.method, &bank.stage1(&all, c), &bank.stage2(&all), &cfg)
    })
    .into_iter()
    .collect()
}

pub fn write_report_json<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, report)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

/// `method,parameter,certain,mean_validation_r2,mean_r2,chosen` rows; a
/// report without a sweep yields one row per parameter.
pub fn write_sweep_csv(report: &PretrainReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| GlpError::Csv { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["method", "parameter", "certain", "mean_validation_r2", "mean_r2", "chosen"]).map_err(csv_err)?;
    for p in &report.parameters {
        let rows: Vec<SweepRow> = if p.sweep.is_empty() {
            let v = mean(&p.folds.iter().map(|f| f.validation_r2).collect::<Vec<_>>());
            vec![SweepRow { certain: p.certain, mean_validation_r2: v, mean_r2: p.mean_r2 }]
        } else {
            p.sweep.clone()
        };
        for row in rows {
            w.write_record([
                report.method.name().to_string(),
                p.parameter.csv_name().to_string(),
                row.certain.to_string(),
                format!("{:.6}", row.mean_validation_r2),
                format!("{:.6}", row.mean_r2),
                u8::from(row.certain == p.certain).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
