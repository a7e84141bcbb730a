//! Per-parameter frame preparation.

use crate::cohort::{LabParameter, Patient};
use crate::error::Result;
use crate::framing::{build_stage1_frames, build_stage2_frame, Demographics, Frame};
use crate::interp::{interpolate_series, InterpMethod};

/// All frames one patient contributes for one parameter. Stage-1 frames are
/// unfiltered; [`PatientFrames::stage1`] applies the certainty filter.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientFrames {
    pub patient_id: String,
    all_stage1: Vec<Frame>,
    pub stage2: Option<Frame>,
}

impl PatientFrames {
    pub fn stage1(&self, certain: u8) -> impl Iterator<Item = &Frame> {
        self.all_stage1.iter().filter(move |f| f.real_count >= usize::from(certain))
    }
}

/// Frames of one parameter, indexed like the patient list they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBank {
    pub parameter: LabParameter,
    pub patients: Vec<PatientFrames>,
}

impl FrameBank {
    pub fn stage1<'a>(&'a self, idx: &'a [usize], certain: u8) -> Vec<&'a Frame> {
        idx.iter().flat_map(|&i| self.patients[i].stage1(certain)).collect()
    }

    pub fn stage2<'a>(&'a self, idx: &'a [usize]) -> Vec<&'a Frame> {
        idx.iter().filter_map(|&i| self.patients[i].stage2.as_ref()).collect()
    }
}

/// Interpolate every patient's series for `parameter` and cut its frames.
pub fn prepare_parameter(patients: &[Patient], parameter: LabParameter, interp: InterpMethod) -> Result<FrameBank> {
    let patients = patients
        .iter()
        .map(|p| {
            let filled = interpolate_series(p.series(parameter), interp)?;
            let demo = Demographics { age_at_start: p.age_at_start, gender: p.gender };
            Ok(PatientFrames {
                patient_id: p.patient_id.clone(),
                all_stage1: build_stage1_frames(&filled, demo, 0)?,
                stage2: build_stage2_frame(&filled, demo)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameBank { parameter, patients })
}
