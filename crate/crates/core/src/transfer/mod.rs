//! Frozen-model features and the downstream classification study.

mod classify;
mod metrics;

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use classify::{train_classifier, Classifier, ClassifierKind, ClassifierParams};
pub use metrics::{auroc, classification_metrics, cohens_kappa, mean_pairwise_kappa, MetricsRow, METRIC_NAMES};

use crate::cohort::{EpisodicRecord, LabParameter};
use crate::encoding::{denormalize, encode_frame, normalize, FrameContext};
use crate::error::{GlpError, Result};
use crate::framing::WINDOW;
use crate::net::{regressor_forward, GlpModel, INPUT};
use crate::par;
use crate::rng::{derive, rng_for};
use crate::stats::{mean, t_test, TTestVariant};

/// Six frozen models in [`LabParameter::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: Vec<GlpModel>,
}

impl ModelSet {
    pub fn new(models: Vec<GlpModel>) -> Result<Self> {
        if models.len() != LabParameter::ALL.len() {
            return Err(GlpError::Shape { expected: LabParameter::ALL.len(), got: models.len() });
        }
        for (m, p) in models.iter().zip(LabParameter::ALL) {
            m.expect_parameter(p)?;
        }
        Ok(Self { models })
    }

    pub fn get(&self, parameter: LabParameter) -> &GlpModel {
        &self.models[parameter.index()]
    }

    pub fn models(&self) -> &[GlpModel] {
        &self.models
    }

    pub fn checksums(&self) -> Vec<u32> {
        self.models.iter().map(GlpModel::checksum).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressFeatures {
    pub patient_id: String,
    pub label: bool,
    /// Final-pass final-month latent of each model, six blocks of 5.
    pub emb: Vec<f64>,
    /// Regressor output of each model.
    pub out: [f64; 6],
    /// Normalized input values.
    pub raw: [f64; 6],
    /// Regressor output after `ceil(g / 2)` passes.
    pub half: [f64; 6],
}

/// Twelve months of the single observed value, only the last flagged real.
fn seed_window(record: &EpisodicRecord, parameter: LabParameter) -> Result<crate::encoding::Window> {
    let mut flags = [false; WINDOW];
    flags[WINDOW - 1] = true;
    let ctx = FrameContext {
        patient_id: &record.patient_id,
        parameter,
        age_years: record.age,
        gender: record.gender,
        start_month: 0,
    };
    encode_frame(&ctx, &[record.value(parameter); WINDOW], &flags)
}

pub fn extract_features(models: &ModelSet, record: &EpisodicRecord) -> Result<ProgressFeatures> {
    record.validate()?;
    let g = record.gap_months;
    let mut f = ProgressFeatures {
        patient_id: record.patient_id.clone(),
        label: record.label,
        emb: Vec::with_capacity(6 * INPUT),
        out: [0.0; 6],
        raw: [0.0; 6],
        half: [0.0; 6],
    };
    for p in LabParameter::ALL {
        let model = models.get(p);
        let run = model.rollout(&seed_window(record, p)?, g);
        let k = p.index();
        f.emb.extend(run.latent());
        f.out[k] = run.prediction;
        f.raw[k] = normalize(record.value(p))?;
        let mid = g.div_ceil(2).max(1) as usize;
        f.half[k] = regressor_forward(&model.params.regressor, &run.passes[mid - 1].final_latent())?;
    }
    if f.emb.iter().chain(&f.out).chain(&f.half).any(|v| !v.is_finite()) {
        return Err(GlpError::Numeric(format!("{}: non-finite transfer feature", record.patient_id)));
    }
    Ok(f)
}

/// Keep every positive and an equal number of negatives drawn without
/// replacement; original order is preserved.
pub fn downsample_negatives(records: &[EpisodicRecord], seed: u64) -> Result<Vec<EpisodicRecord>> {
    let mut negatives: Vec<usize> = (0..records.len()).filter(|&i| !records[i].label).collect();
    let n_pos = records.len() - negatives.len();
    if negatives.len() < n_pos {
        return Err(GlpError::Precondition(format!(
            "{} negatives cannot balance {n_pos} positives",
            negatives.len()
        )));
    }
    negatives.shuffle(&mut rng_for(seed, "downsample", 0));
    let mut keep = vec![false; records.len()];
    for &i in &negatives[..n_pos] {
        keep[i] = true;
    }
    Ok(records.iter().zip(&keep).filter(|(r, &k)| r.label || k).map(|(r, _)| r.clone()).collect())
}

/// Label-stratified 80:20 split of `0..labels.len()`; both halves sorted.
pub fn stratified_split(labels: &[bool], ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng_for(seed, "stratified-split", 0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = ((idx.len() as f64) * ratio).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Raw,
    Emb,
    Out,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Raw, Representation::Emb, Representation::Out];

    pub fn name(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Emb => "emb",
            Representation::Out => "out",
        }
    }

    pub fn of(self, f: &ProgressFeatures) -> Vec<f64> {
        match self {
            Representation::Raw => f.raw.to_vec(),
            Representation::Emb => f.emb.clone(),
            Representation::Out => f.out.to_vec(),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamConfig {
    pub repetitions: usize,
    pub split_ratio: f64,
    pub t_test: TTestVariant,
    pub classifiers: ClassifierParams,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self { repetitions: 5, split_ratio: 0.8, t_test: TTestVariant::Pooled, classifiers: ClassifierParams::default() }
    }
}

impl DownstreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            return Err(GlpError::Config("downstream repetitions must be >= 2 for the t-tests".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(GlpError::Config("downstream split_ratio must lie in (0, 1)".into()));
        }
        if self.classifiers.knn_k == 0 || self.classifiers.gbt_rounds == 0 || !(self.classifiers.c > 0.0) {
            return Err(GlpError::Config("knn_k, gbt_rounds and c must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRow {
    pub classifier: ClassifierKind,
    /// Mean over repetitions.
    pub metrics: MetricsRow,
    pub per_repetition: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub representation: Representation,
    pub classifiers: Vec<ClassifierRow>,
    /// Mean of the classifier rows.
    pub averaged: MetricsRow,
    /// Mean over repetitions of the mean pairwise kappa of the four
    /// classifiers' test predictions.
    pub mean_pairwise_kappa: f64,
    pub kappa_per_repetition: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub a: Representation,
    pub b: Representation,
    pub metric: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant_05: bool,
    pub significant_01: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub seed: u64,
    pub repetitions: usize,
    pub split_ratio: f64,
    pub records: usize,
    pub balanced_records: usize,
    pub representations: Vec<RepresentationReport>,
    pub t_tests: Vec<TTestRow>,
    pub model_checksums: Vec<String>,
}

impl DownstreamReport {
    pub fn representation(&self, r: Representation) -> &RepresentationReport {
        self.representations.iter().find(|x| x.representation == r).expect("all representations present")
    }
}

struct Cell {
    metrics: MetricsRow,
    predictions: Vec<bool>,
}

/// Features of every record, extracted in parallel; the models are only read.
pub fn extract_all(models: &ModelSet, records: &[EpisodicRecord]) -> Result<Vec<ProgressFeatures>> {
    par::map(records, |r| extract_features(models, r)).into_iter().collect()
}

/// Downsample, split 80:20 (stratified), train the four classifiers on each
/// representation, and repeat with fresh seeds.
pub fn run_downstream_study(
    models: &ModelSet,
    records: &[EpisodicRecord],
    config: &DownstreamConfig,
    seed: u64,
) -> Result<(DownstreamReport, Vec<ProgressFeatures>)> {
    config.validate()?;
    let before = models.checksums();
    let features = extract_all(models, records)?;
    let by_id: std::collections::HashMap<&str, &ProgressFeatures> =
        features.iter().map(|f| (f.patient_id.as_str(), f)).collect();

    let mut balanced_len = 0;
    let mut plans = Vec::with_capacity(config.repetitions);
    for rep in 0..config.repetitions {
        let balanced = downsample_negatives(records, derive(seed, "downstream-downsample", rep as u64))?;
        balanced_len = balanced.len();
        let feats: Vec<&ProgressFeatures> = balanced.iter().map(|r| by_id[r.patient_id.as_str()]).collect();
        let labels: Vec<bool> = feats.iter().map(|f| f.label).collect();
        let (train, test) = stratified_split(&labels, config.split_ratio, derive(seed, "downstream-split", rep as u64));
        plans.push((feats, labels, train, test));
    }

    let mut jobs = Vec::new();
    for rep in 0..config.repetitions {
        for r in Representation::ALL {
            for k in ClassifierKind::ALL {
                jobs.push((rep, r, k));
            }
        }
    }
    let cells = par::map(&jobs, |&(rep, repr, kind)| -> Result<Cell> {
        let (feats, labels, train, test) = &plans[rep];
        let x_train: Vec<Vec<f64>> = train.iter().map(|&i| repr.of(feats[i])).collect();
        let y_train: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let x_test: Vec<Vec<f64>> = test.iter().map(|&i| repr.of(feats[i])).collect();
        let y_test: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        let clf = train_classifier(kind, &x_train, &y_train, &config.classifiers, derive(seed, "classifier", rep as u64))?;
        let (predictions, scores) = clf.predict_all(&x_test);
        Ok(Cell { metrics: classification_metrics(&y_test, &predictions, &scores)?, predictions })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let cell = |rep: usize, r: Representation, k: ClassifierKind| -> &Cell {
        let i = jobs.iter().position(|&j| j == (rep, r, k)).expect("job exists");
        &cells[i]
    };

    let mut representations = Vec::new();
    for r in Representation::ALL {
        let classifiers: Vec<ClassifierRow> = ClassifierKind::ALL
            .into_iter()
            .map(|k| {
                let per_repetition: Vec<MetricsRow> = (0..config.repetitions).map(|rep| cell(rep, r, k).metrics).collect();
                ClassifierRow { classifier: k, metrics: MetricsRow::mean(&per_repetition), per_repetition }
            })
            .collect();
        let averaged = MetricsRow::mean(&classifiers.iter().map(|c| c.metrics).collect::<Vec<_>>());
        let kappa_per_repetition = (0..config.repetitions)
            .map(|rep| {
                let preds: Vec<Vec<bool>> = ClassifierKind::ALL.iter().map(|&k| cell(rep, r, k).predictions.clone()).collect();
                mean_pairwise_kappa(&preds)
            })
            .collect::<Result<Vec<_>>>()?;
        representations.push(RepresentationReport {
            representation: r,
            classifiers,
            averaged,
            mean_pairwise_kappa: mean(&kappa_per_repetition),
            kappa_per_repetition,
        });
    }

    let mut t_tests = Vec::new();
    let samples = |r: &RepresentationReport, m: usize| -> Vec<f64> {
        r.classifiers.iter().flat_map(|c| c.per_repetition.iter().map(move |row| row.values()[m])).collect()
    };
    for (ia, ib) in [(0, 1), (0, 2), (1, 2)] {
        let (ra, rb) = (&representations[ia], &representations[ib]);
        let mut push = |metric: &str, a: &[f64], b: &[f64]| -> Result<()> {
            let t = t_test(a, b, config.t_test)?;
            t_tests.push(TTestRow {
                a: ra.representation,
                b: rb.representation,
                metric: metric.to_string(),
                t: t.t,
                df: t.df,
                p: t.p,
                significant_05: t.significant(0.05),
                significant_01: t.significant(0.01),
            });
            Ok(())
        };
        for (m, name) in METRIC_NAMES.iter().enumerate() {
            push(name, &samples(ra, m), &samples(rb, m))?;
        }
        push("kappa", &ra.kappa_per_repetition, &rb.kappa_per_repetition)?;
    }

    let after = models.checksums();
    if before != after {
        return Err(GlpError::Precondition("a model changed during the downstream study".into()));
    }
    let report = DownstreamReport {
        seed,
        repetitions: config.repetitions,
        split_ratio: config.split_ratio,
        records: records.len(),
        balanced_records: balanced_len,
        representations,
        t_tests,
        model_checksums: after.iter().map(|c| format!("{c:08x}")).collect(),
    };
    Ok((report, features))
}

fn csv_writer(path: &Path) -> Result<(csv::Writer<std::fs::File>, impl Fn(csv::Error) -> GlpError + '_)> {
    let err = move |e: csv::Error| GlpError::Csv { path: path.to_path_buf(), message: e.to_string() };
    Ok((csv::Writer::from_path(path).map_err(err)?, err))
}

fn fmt6(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

/// One row per (representation, classifier) plus an `average` row carrying
/// the mean pairwise kappa.
pub fn write_table_csv(report: &DownstreamReport, path: impl AsRef<Path>) -> Result<()> {
    let (mut w, err) = csv_writer(path.as_ref())?;
    let mut header = vec!["representation", "classifier"];
    header.extend(METRIC_NAMES);
    header.push("mean_pairwise_kappa");
    w.write_record(&header).map_err(&err)?;
    for r in &report.representations {
        let rows = r
            .classifiers
            .iter()
            .map(|c| (c.classifier.name(), c.metrics, None))
            .chain(std::iter::once(("average", r.averaged, Some(r.mean_pairwise_kappa))));
        for (name, m, kappa) in rows {
            let mut rec = vec![r.representation.name().to_string(), name.to_string()];
            rec.extend(m.values().iter().map(|&v| fmt6(v)));
            rec.push(kappa.map(fmt6).unwrap_or_default());
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `patient_id,parameter,stage,value,label` with stages raw, half and full,
/// values denormalized to lab units.
pub fn write_distribution_csv(features: &[ProgressFeatures], path: impl AsRef<Path>) -> Result<()> {
    let (mut w, err) = csv_writer(path.as_ref())?;
    w.write_record(["patient_id", "parameter", "stage", "value", "label"]).map_err(&err)?;
    for f in features {
        for p in LabParameter::ALL {
            let k = p.index();
            for (stage, v) in [("raw", f.raw[k]), ("half", f.half[k]), ("full", f.out[k])] {
                w.write_record([
                    f.patient_id.as_str(),
                    p.csv_name(),
                    stage,
                    &format!("{:.6}", denormalize(v)),
                    if f.label { "1" } else { "0" },
                ])
                .map_err(&err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
