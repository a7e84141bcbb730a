//! Synthetic cohorts with a planted per-parameter AR(1)-with-drift process.
//!
//! Each lab value lives on a log scale: `log v_t = level + drift * t + a_t`
//! with `a_{t+1} = phi * a_t + eps_t`. The patient-specific `level` and
//! `drift` give between-patient structure, the AR component gives
//! month-to-month dynamics. Values are only emitted at real visit months.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Geometric, Normal};
use serde::{Deserialize, Serialize};

use super::{EpisodicRecord, Gender, LabParameter, LabSeries, Observation, Patient};
use crate::error::{GlpError, Result};
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub n_patients: usize,
    /// Length of each patient's observation timeline in months.
    pub months_span: u32,
    /// Mean gap between real visits in months.
    pub visit_period_mean: f64,
    /// Probability that a parameter is not measured at a scheduled visit.
    pub dropout_prob: f64,
    /// Set from the run seed, never read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self { n_patients: 240, months_span: 48, visit_period_mean: 3.0, dropout_prob: 0.1, seed: 0 }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(GlpError::Config("n_patients must be >= 1".into()));
        }
        if !(self.visit_period_mean >= 1.0) {
            return Err(GlpError::Config(format!("visit_period_mean must be >= 1, got {}", self.visit_period_mean)));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(GlpError::Config(format!("dropout_prob must be in [0, 1), got {}", self.dropout_prob)));
        }
        if self.months_span < 1 {
            return Err(GlpError::Config("months_span must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-parameter process constants. Medians sit inside the normal ranges.
struct Process {
    median: f64,
    between_sd: f64,
    innovation_sd: f64,
    phi: f64,
    drift_mean: f64,
    drift_sd: f64,
    noise_sd: f64,
}

fn process(parameter: LabParameter) -> Process {
    let base = Process {
        median: 1.0,
        between_sd: 0.18,
        innovation_sd: 0.06,
        phi: 0.9,
        drift_mean: 0.0,
        drift_sd: 0.003,
        noise_sd: 0.03,
    };
    match parameter {
        LabParameter::CholHdlRatio => Process { median: 4.2, ..base },
        LabParameter::LdlC => Process { median: 115.0, between_sd: 0.2, ..base },
        LabParameter::LdlHdlRatio => Process { median: 2.7, between_sd: 0.2, ..base },
        // Hypertensive patients drifting toward diabetes.
        LabParameter::GlucoseAc => Process { median: 100.0, between_sd: 0.1, innovation_sd: 0.04, drift_mean: 0.003, ..base },
        LabParameter::Wbc => Process { median: 6.8, innovation_sd: 0.08, ..base },
        LabParameter::Ua => Process { median: 6.0, between_sd: 0.15, innovation_sd: 0.05, ..base },
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite normal parameters")
}

fn visit_schedule(spec: &GeneratorSpec, rng: &mut Rng) -> Vec<u32> {
    // Gap = 1 + Geometric(p) has mean 1/p; p = 1/mean.
    let p = 1.0 / spec.visit_period_mean;
    let geom = Geometric::new(p).expect("p in (0, 1]");
    let mut months = vec![0u32];
    loop {
        let gap = 1 + geom.sample(rng).min(u64::from(spec.months_span)) as u32;
        let next = months.last().unwrap() + gap;
        if next > spec.months_span {
            break;
        }
        months.push(next);
    }
    if months.len() < 2 {
        months.push(spec.months_span.max(1));
    }
    months
}

fn generate_series(
    patient_id: &str,
    parameter: LabParameter,
    visits: &[u32],
    spec: &GeneratorSpec,
    rng: &mut Rng,
) -> LabSeries {
    let proc = process(parameter);
    let level = proc.median.ln() + normal(0.0, proc.between_sd).sample(rng);
    let drift = normal(proc.drift_mean, proc.drift_sd).sample(rng);
    let stationary_sd = proc.innovation_sd / (1.0 - proc.phi * proc.phi).sqrt();
    let mut ar = normal(0.0, stationary_sd).sample(rng);
    let innovation = normal(0.0, proc.innovation_sd);
    let noise = normal(0.0, proc.noise_sd);

    let last_visit = *visits.last().unwrap();
    let mut latent = Vec::with_capacity(last_visit as usize + 1);
    for t in 0..=last_visit {
        latent.push(level + drift * f64::from(t) + ar);
        ar = proc.phi * ar + innovation.sample(rng);
    }

    let mut observations = Vec::with_capacity(visits.len());
    for (k, &month) in visits.iter().enumerate() {
        let first_or_last = k == 0 || k + 1 == visits.len();
        let dropped = rng.random::<f64>() < spec.dropout_prob;
        if dropped && !first_or_last {
            continue;
        }
        let value = (latent[month as usize] + noise.sample(rng)).exp();
        observations.push(Observation::real(month, value));
    }
    LabSeries { patient_id: patient_id.to_string(), parameter, observations }
}

/// Generate a longitudinal pretext cohort. Deterministic in `spec`.
pub fn generate_pretext_cohort(spec: &GeneratorSpec) -> Result<Vec<Patient>> {
    spec.validate()?;
    let age_dist = normal(57.0, 9.7);
    let mut patients = Vec::with_capacity(spec.n_patients);
    for idx in 0..spec.n_patients {
        let mut rng = rng_for(spec.seed, "pretext-patient", idx as u64);
        let patient_id = format!("P{idx:05}");
        let age = age_dist.sample(&mut rng).clamp(40.0, 95.0);
        let gender = if rng.random::<f64>() < 0.518 { Gender::Male } else { Gender::Female };
        let visits = visit_schedule(spec, &mut rng);
        let series = LabParameter::ALL
            .into_iter()
            .map(|p| generate_series(&patient_id, p, &visits, spec, &mut rng))
            .collect();
        patients.push(Patient::new(patient_id, age, gender, series)?);
    }
    Ok(patients)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamSpec {
    pub n_positive: usize,
    pub n_negative: usize,
    /// Signal strength. 0 makes the classes identically distributed; at 1 and
    /// above the gap distributions reach their configured class means.
    pub separation: f64,
    /// Set from the run seed, never read from config.
    #[serde(skip)]
    pub seed: u64,
    /// Mean months from index event to outcome for positives.
    pub gap_mean_positive: f64,
    pub gap_sd_positive: f64,
    /// Mean months from index event to censoring for negatives.
    pub gap_mean_negative: f64,
    pub gap_sd_negative: f64,
    /// Longest follow-up in months.
    pub gap_max: u32,
}

impl Default for DownstreamSpec {
    fn default() -> Self {
        Self {
            n_positive: 42,
            n_negative: 441,
            separation: 1.0,
            seed: 0,
            gap_mean_positive: 27.8,
            gap_sd_positive: 31.7,
            gap_mean_negative: 106.1,
            gap_sd_negative: 44.8,
            gap_max: 204,
        }
    }
}

impl DownstreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_positive == 0 || self.n_negative == 0 {
            return Err(GlpError::Config("n_positive and n_negative must be >= 1".into()));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(GlpError::Config(format!("separation must be >= 0, got {}", self.separation)));
        }
        for (name, v) in [
            ("gap_mean_positive", self.gap_mean_positive),
            ("gap_sd_positive", self.gap_sd_positive),
            ("gap_mean_negative", self.gap_mean_negative),
            ("gap_sd_negative", self.gap_sd_negative),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GlpError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gap_max < 1 {
            return Err(GlpError::Config("gap_max must be >= 1".into()));
        }
        Ok(())
    }
}

fn gamma_with(mean: f64, sd: f64) -> Gamma<f64> {
    let shape = (mean / sd).powi(2);
    let scale = sd * sd / mean;
    Gamma::new(shape, scale).expect("positive gamma parameters")
}

/// Generate an episodic downstream cohort. Labels are placed in a seeded
/// random order.
pub fn generate_downstream_cohort(spec: &DownstreamSpec) -> Result<Vec<EpisodicRecord>> {
    spec.validate()?;
    let mix = spec.separation.min(1.0);
    let pos_mean = spec.gap_mean_negative + mix * (spec.gap_mean_positive - spec.gap_mean_negative);
    let pos_sd = spec.gap_sd_negative + mix * (spec.gap_sd_positive - spec.gap_sd_negative);
    let gap_pos = gamma_with(pos_mean, pos_sd);
    let gap_neg = gamma_with(spec.gap_mean_negative, spec.gap_sd_negative);
    let age_dist = normal(66.8, 12.5);

    let total = spec.n_positive + spec.n_negative;
    let mut labels: Vec<bool> = (0..total).map(|i| i < spec.n_positive).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = rng_for(spec.seed, "downstream-order", 0);
        labels.shuffle(&mut rng);
    }

    let mut records = Vec::with_capacity(total);
    for (idx, &label) in labels.iter().enumerate() {
        let mut rng = rng_for(spec.seed, "downstream-record", idx as u64);
        let age = age_dist.sample(&mut rng).clamp(18.0, 105.0);
        let gender = if rng.random::<f64>() < 0.832 { Gender::Male } else { Gender::Female };
        // Positives scatter further from the population level.
        let spread = if label { 1.0 + spec.separation } else { 1.0 };
        let mut values = [0.0; 6];
        for (slot, p) in values.iter_mut().zip(LabParameter::ALL) {
            let proc = process(p);
            let z: f64 = normal(0.0, 1.0).sample(&mut rng);
            *slot = (proc.median.ln() + proc.between_sd * spread * z).exp();
        }
        let g = if label { gap_pos.sample(&mut rng) } else { gap_neg.sample(&mut rng) };
        let gap_months = (g.round() as u32).clamp(1, spec.gap_max);
        records.push(EpisodicRecord {
            patient_id: format!("D{idx:05}"),
            age,
            gender,
            values,
            gap_months,
            label,
        });
    }
    Ok(records)
}
