//! Pretext and episodic CSV schemas.
//!
//! Bad rows are skipped and listed in a [`RejectionReport`] instead of
//! aborting the read; a patient that ends up without all six valid series is
//! dropped as a whole.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpisodicRecord, Gender, LabParameter, LabSeries, Observation, Patient};
use crate::error::{GlpError, Result};

pub const COHORT_HEADER: [&str; 6] = ["patient_id", "age_at_start", "gender", "parameter", "month", "value"];
pub const EPISODIC_HEADER: [&str; 11] = [
    "patient_id",
    "age",
    "gender",
    "chol_hdl",
    "ldl",
    "ldl_hdl",
    "glucose_ac",
    "wbc",
    "ua",
    "gap_months",
    "label",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the file (header is line 1). 0 for
    /// patient-level rejections.
    pub line: u64,
    pub patient_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rows: Vec<Rejection>,
    pub patients: Vec<Rejection>,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.patients.is_empty()
    }
}

fn csv_err(path: &Path, message: impl Into<String>) -> GlpError {
    GlpError::Csv { path: path.to_path_buf(), message: message.into() }
}

fn open_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(path, e.to_string()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(csv_err(path, format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), expected)));
    }
    Ok(reader)
}

/// Parse a numeric field; "NA", "." and empty are erroneous values.
fn parse_num(field: &str, name: &str) -> std::result::Result<f64, String> {
    let t = field.trim();
    if t.is_empty() || t == "NA" || t == "." {
        return Err(format!("erroneous {name} value {t:?}"));
    }
    let v: f64 = t.parse().map_err(|_| format!("unparseable {name} {t:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite {name} {t:?}"));
    }
    Ok(v)
}

fn parse_age(field: &str) -> std::result::Result<f64, String> {
    let age = parse_num(field, "age")?;
    if !(18.0..=110.0).contains(&age) {
        return Err(format!("age {age} outside [18, 110]"));
    }
    Ok(age)
}

struct PatientAccum {
    age: f64,
    gender: Gender,
    series: [Vec<Observation>; 6],
}

/// Read a pretext cohort. All rows are real observations.
pub fn read_cohort_csv(path: impl AsRef<Path>) -> Result<(Vec<Patient>, RejectionReport)> {
    let path = path.as_ref();
    let mut reader = open_reader(path, &COHORT_HEADER)?;
    let mut report = RejectionReport::default();
    let mut order: Vec<String> = Vec::new();
    let mut accum: HashMap<String, PatientAccum> = HashMap::new();

    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rows.push(Rejection { line, patient_id: String::new(), reason: e.to_string() });
                continue;
            }
        };
        let pid = row.get(0).unwrap_or("").to_string();
        let mut reject = |reason: String| report.rows.push(Rejection { line, patient_id: pid.clone(), reason });
        if row.len() != COHORT_HEADER.len() {
            reject(format!("{} fields, expected {}", row.len(), COHORT_HEADER.len()));
            continue;
        }
        if pid.is_empty() {
            reject("empty patient_id".into());
            continue;
        }
        let age = match parse_age(&row[1]) {
            Ok(a) => a,
            Err(e) => {
                reject(e);
                continue;
            }
        };
        let Some(gender) = Gender::from_code(row[2].trim()) else {
            reject(format!("unknown gender {:?}", &row[2]));
            continue;
        };
        let Some(parameter) = LabParameter::from_csv_name(row[3].trim()) else {
            reject(format!("unknown parameter {:?}", &row[3]));
            continue;
        };
        let month = match row[4].trim().parse::<u32>() {
            Ok(m) => m,
            Err(_) => {
                reject(format!("bad month {:?}", &row[4]));
                continue;
            }
        };
        let value = match parse_num(&row[5], "value") {
            Ok(v) if v > 0.0 => v,
            Ok(v) => {
                reject(format!("non-positive value {v}"));
                continue;
            }
            Err(e) => {
                reject(e);
                continue;
            }
        };

        let entry = accum.entry(pid.clone()).or_insert_with(|| {
            order.push(pid.clone());
            PatientAccum { age, gender, series: Default::default() }
        });
        if entry.age != age || entry.gender != gender {
            reject("age/gender disagree with earlier rows for this patient".into());
            continue;
        }
        let obs = &mut entry.series[parameter.index()];
        if let Some(last) = obs.last() {
            if month <= last.month {
                let kind = if month == last.month { "repeated" } else { "non-monotone" };
                reject(format!("{kind} month {month} for {parameter} (previous {})", last.month));
                continue;
            }
        }
        obs.push(Observation::real(month, value));
    }

    let mut patients = Vec::with_capacity(order.len());
    for pid in order {
        let acc = accum.remove(&pid).expect("accumulated");
        let series: Vec<LabSeries> = LabParameter::ALL
            .into_iter()
            .zip(acc.series)
            .map(|(p, obs)| LabSeries { patient_id: pid.clone(), parameter: p, observations: obs })
            .collect();
        match Patient::new(pid.clone(), acc.age, acc.gender, series) {
            Ok(p) => patients.push(p),
            Err(e) => report.patients.push(Rejection { line: 0, patient_id: pid, reason: e.to_string() }),
        }
    }
    Ok((patients, report))
}

/// Write a pretext cohort. Only real observations are representable.
pub fn write_cohort_csv(patients: &[Patient], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{}", COHORT_HEADER.join(","))?;
    for p in patients {
        for s in &p.series {
            for o in &s.observations {
                if !o.is_real {
                    return Err(GlpError::Precondition(format!(
                        "{} / {} month {}: estimated observations cannot be written to a cohort CSV",
                        p.patient_id, s.parameter, o.month
                    )));
                }
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    p.patient_id,
                    p.age_at_start,
                    p.gender.code(),
                    s.parameter.csv_name(),
                    o.month,
                    o.value
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodic_csv(path: impl AsRef<Path>) -> Result<(Vec<EpisodicRecord>, RejectionReport)> {
    let path = path.as_ref();
    let mut reader = open_reader(path, &EPISODIC_HEADER)?;
    let mut report = RejectionReport::default();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rows.push(Rejection { line, patient_id: String::new(), reason: e.to_string() });
                continue;
            }
        };
        let pid = row.get(0).unwrap_or("").to_string();
        match parse_episodic_row(&row) {
            Ok(r) => records.push(r),
            Err(reason) => report.rows.push(Rejection { line, patient_id: pid, reason }),
        }
    }
    Ok((records, report))
}

fn parse_episodic_row(row: &csv::StringRecord) -> std::result::Result<EpisodicRecord, String> {
    if row.len() != EPISODIC_HEADER.len() {
        return Err(format!("{} fields, expected {}", row.len(), EPISODIC_HEADER.len()));
    }
    let patient_id = row[0].to_string();
    if patient_id.is_empty() {
        return Err("empty patient_id".into());
    }
    let age = parse_age(&row[1])?;
    let gender = Gender::from_code(row[2].trim()).ok_or_else(|| format!("unknown gender {:?}", &row[2]))?;
    let mut values = [0.0; 6];
    for (k, slot) in values.iter_mut().enumerate() {
        let v = parse_num(&row[3 + k], EPISODIC_HEADER[3 + k])?;
        if v < 0.0 {
            return Err(format!("negative {} {v}", EPISODIC_HEADER[3 + k]));
        }
        *slot = v;
    }
    let gap_months: u32 = row[9].trim().parse().map_err(|_| format!("bad gap_months {:?}", &row[9]))?;
    if gap_months < 1 {
        return Err("gap_months must be >= 1".into());
    }
    let label = match row[10].trim() {
        "0" => false,
        "1" => true,
        other => return Err(format!("label must be 0 or 1, got {other:?}")),
    };
    Ok(EpisodicRecord { patient_id, age, gender, values, gap_months, label })
}

pub fn write_episodic_csv(records: &[EpisodicRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{}", EPISODIC_HEADER.join(","))?;
    for r in records {
        write!(out, "{},{},{}", r.patient_id, r.age, r.gender.code())?;
        for v in r.values {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{},{}", r.gap_months, u8::from(r.label))?;
    }
    out.flush()?;
    Ok(())
}
