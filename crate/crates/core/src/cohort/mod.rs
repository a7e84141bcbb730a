//! Patients, lab series and episodic downstream records.

mod csv_io;
mod generate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GlpError, Result};

pub use csv_io::{
    read_cohort_csv, read_episodic_csv, write_cohort_csv, write_episodic_csv, Rejection,
    RejectionReport, COHORT_HEADER, EPISODIC_HEADER,
};
pub use generate::{generate_downstream_cohort, generate_pretext_cohort, DownstreamSpec, GeneratorSpec};

/// The six laboratory parameters, in the fixed order used everywhere
/// (feature concatenation, CSV columns, weight-file ids).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabParameter {
    CholHdlRatio,
    LdlC,
    LdlHdlRatio,
    GlucoseAc,
    Wbc,
    Ua,
}

impl LabParameter {
    pub const ALL: [LabParameter; 6] = [
        LabParameter::CholHdlRatio,
        LabParameter::LdlC,
        LabParameter::LdlHdlRatio,
        LabParameter::GlucoseAc,
        LabParameter::Wbc,
        LabParameter::Ua,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(usize::from(id)).copied()
    }

    /// Name used in the `parameter` column of the pretext CSV.
    pub fn csv_name(self) -> &'static str {
        match self {
            LabParameter::CholHdlRatio => "CHOL_HDL",
            LabParameter::LdlC => "LDL",
            LabParameter::LdlHdlRatio => "LDL_HDL",
            LabParameter::GlucoseAc => "GLUCOSE_AC",
            LabParameter::Wbc => "WBC",
            LabParameter::Ua => "UA",
        }
    }

    /// Column name in the episodic CSV.
    pub fn column_name(self) -> &'static str {
        match self {
            LabParameter::CholHdlRatio => "chol_hdl",
            LabParameter::LdlC => "ldl",
            LabParameter::LdlHdlRatio => "ldl_hdl",
            LabParameter::GlucoseAc => "glucose_ac",
            LabParameter::Wbc => "wbc",
            LabParameter::Ua => "ua",
        }
    }

    pub fn from_csv_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.csv_name() == s)
    }
}

impl fmt::Display for LabParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.csv_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "M" => Some(Gender::Male),
            "F" => Some(Gender::Female),
            _ => None,
        }
    }

    /// Binary channel value: 1 for male, 0 for female.
    pub fn as_binary(self) -> f64 {
        match self {
            Gender::Male => 1.0,
            Gender::Female => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub month: u32,
    pub value: f64,
    /// `false` when the value was filled in by interpolation.
    pub is_real: bool,
}

impl Observation {
    pub fn real(month: u32, value: f64) -> Self {
        Self { month, value, is_real: true }
    }

    pub fn estimated(month: u32, value: f64) -> Self {
        Self { month, value, is_real: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSeries {
    pub patient_id: String,
    pub parameter: LabParameter,
    pub observations: Vec<Observation>,
}

impl LabSeries {
    /// Build a series and check its invariants.
    pub fn new(patient_id: impl Into<String>, parameter: LabParameter, observations: Vec<Observation>) -> Result<Self> {
        let series = Self { patient_id: patient_id.into(), parameter, observations };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.observations.windows(2) {
            if pair[1].month <= pair[0].month {
                return Err(GlpError::Precondition(format!(
                    "{} / {}: months not strictly increasing ({} then {})",
                    self.patient_id, self.parameter, pair[0].month, pair[1].month
                )));
            }
        }
        if let Some(o) = self.observations.iter().find(|o| !o.value.is_finite() || o.value <= 0.0) {
            return Err(GlpError::Precondition(format!(
                "{} / {}: value {} at month {} is not finite and positive",
                self.patient_id, self.parameter, o.value, o.month
            )));
        }
        let reals = self.real_count();
        if reals < 2 {
            return Err(GlpError::Precondition(format!(
                "{} / {}: {reals} real observations, need at least 2",
                self.patient_id, self.parameter
            )));
        }
        Ok(())
    }

    pub fn real_count(&self) -> usize {
        self.observations.iter().filter(|o| o.is_real).count()
    }

    pub fn reals(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(|o| o.is_real)
    }

    pub fn value_at(&self, month: u32) -> Option<&Observation> {
        self.observations
            .binary_search_by_key(&month, |o| o.month)
            .ok()
            .map(|i| &self.observations[i])
    }

    /// Month of the last real observation (`t_n`).
    pub fn last_real_month(&self) -> Option<u32> {
        self.reals().last().map(|o| o.month)
    }

    /// Month of the second-to-last real observation (`t_m`).
    pub fn second_last_real_month(&self) -> Option<u32> {
        let mut it = self.observations.iter().rev().filter(|o| o.is_real);
        it.next()?;
        it.next().map(|o| o.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub age_at_start: f64,
    pub gender: Gender,
    /// One series per parameter, in [`LabParameter::ALL`] order.
    pub series: Vec<LabSeries>,
}

impl Patient {
    pub fn new(patient_id: impl Into<String>, age_at_start: f64, gender: Gender, series: Vec<LabSeries>) -> Result<Self> {
        let p = Self { patient_id: patient_id.into(), age_at_start, gender, series };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(18.0..=110.0).contains(&self.age_at_start) {
            return Err(GlpError::Precondition(format!(
                "{}: age {} outside [18, 110]",
                self.patient_id, self.age_at_start
            )));
        }
        if self.series.len() != LabParameter::ALL.len() {
            return Err(GlpError::Precondition(format!(
                "{}: {} series, need all six",
                self.patient_id,
                self.series.len()
            )));
        }
        for (s, p) in self.series.iter().zip(LabParameter::ALL) {
            if s.parameter != p {
                return Err(GlpError::Precondition(format!(
                    "{}: series out of order ({} where {} expected)",
                    self.patient_id, s.parameter, p
                )));
            }
            if s.patient_id != self.patient_id {
                return Err(GlpError::Precondition(format!(
                    "series for {} filed under {}",
                    s.patient_id, self.patient_id
                )));
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn series(&self, parameter: LabParameter) -> &LabSeries {
        &self.series[parameter.index()]
    }
}

/// One downstream patient: six lab values at the index event, the month gap
/// to the outcome (or censoring) and the outcome label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    /// In [`LabParameter::ALL`] order.
    pub values: [f64; 6],
    pub gap_months: u32,
    pub label: bool,
}

impl EpisodicRecord {
    pub fn validate(&self) -> Result<()> {
        if self.gap_months < 1 {
            return Err(GlpError::Precondition(format!("{}: gap_months must be >= 1", self.patient_id)));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(GlpError::Precondition(format!("{}: lab value {v} is not finite", self.patient_id)));
        }
        if !(18.0..=110.0).contains(&self.age) {
            return Err(GlpError::Precondition(format!("{}: age {} outside [18, 110]", self.patient_id, self.age)));
        }
        Ok(())
    }

    pub fn value(&self, parameter: LabParameter) -> f64 {
        self.values[parameter.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_ids_round_trip() {
        for p in LabParameter::ALL {
            assert_eq!(LabParameter::from_id(p.id()), Some(p));
            assert_eq!(LabParameter::from_csv_name(p.csv_name()), Some(p));
        }
        assert_eq!(LabParameter::from_id(6), None);
        assert_eq!(LabParameter::from_csv_name("HBA1C"), None);
    }

    #[test]
    fn series_invariants() {
        let ok = LabSeries::new("p", LabParameter::Wbc, vec![Observation::real(0, 5.0), Observation::real(3, 6.0)]);
        assert!(ok.is_ok());
        let dup = LabSeries::new("p", LabParameter::Wbc, vec![Observation::real(3, 5.0), Observation::real(3, 6.0)]);
        assert!(dup.is_err());
        let one = LabSeries::new("p", LabParameter::Wbc, vec![Observation::real(0, 5.0)]);
        assert!(one.is_err());
        let neg = LabSeries::new("p", LabParameter::Wbc, vec![Observation::real(0, -1.0), Observation::real(1, 6.0)]);
        assert!(neg.is_err());
    }

    #[test]
    fn m_and_n_months() {
        let s = LabSeries::new(
            "p",
            LabParameter::Ua,
            vec![Observation::real(0, 5.0), Observation::real(3, 6.0), Observation::real(6, 6.5)],
        )
        .unwrap();
        assert_eq!(s.second_last_real_month(), Some(3));
        assert_eq!(s.last_real_month(), Some(6));
    }
}
