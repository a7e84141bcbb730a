//! Stage-1 and Stage-2 frame construction.
//!
//! A frame covers a 13-month span `[s, s + WINDOW]`. Its input matrix holds
//! the first `WINDOW` months of the span and its target is the month right
//! after the span, `s + WINDOW + 1`. `real_count` counts real months over the
//! whole span.
//!
//! Stage-1 frames slide over the interpolated zone `[t_0, t_m]`. Each patient
//! contributes at most one Stage-2 frame: the span `[t_m - WINDOW, t_m]`
//! with the last real observation `t_n` as target and gap `g = n - m - 1`.

use serde::{Deserialize, Serialize};

use crate::cohort::{Gender, LabParameter, LabSeries};
use crate::encoding::{encode_frame, normalize, FrameContext, Window};
use crate::error::{GlpError, Result};

/// Months of input per frame.
pub const WINDOW: usize = 12;
/// Largest Stage-2 gap accepted (`WINDOW / 2`).
pub const MAX_GAP: u32 = (WINDOW / 2) as u32;
/// Largest `certain` value explored.
pub const MAX_CERTAIN: u8 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub patient_id: String,
    pub parameter: LabParameter,
    /// First month of the span.
    pub start_month: u32,
    pub target_month: u32,
    pub input: Window,
    /// `ln(1 + y)` of the target value.
    pub target: f64,
    pub gap: u32,
    /// Real observations inside the 13-month span.
    pub real_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Demographics {
    pub age_at_start: f64,
    pub gender: Gender,
}

/// Index of the interpolated zone: the dense block `[t_0, t_m]`.
struct Zone<'a> {
    series: &'a LabSeries,
    t0: u32,
    m: u32,
}

impl<'a> Zone<'a> {
    fn of(series: &'a LabSeries) -> Option<Self> {
        let t0 = series.observations.first()?.month;
        let m = series.second_last_real_month()?;
        Some(Self { series, t0, m })
    }

    fn obs(&self, month: u32) -> Result<&'a crate::cohort::Observation> {
        self.series.value_at(month).ok_or_else(|| {
            GlpError::Precondition(format!(
                "{} / {}: month {month} missing; run interpolate_series first",
                self.series.patient_id, self.series.parameter
            ))
        })
    }

    fn real_count(&self, start: u32) -> Result<usize> {
        let mut n = 0;
        for month in start..=start + WINDOW as u32 {
            n += usize::from(self.obs(month)?.is_real);
        }
        Ok(n)
    }

    fn encode(&self, demo: Demographics, start: u32) -> Result<Window> {
        let mut values = [0.0; WINDOW];
        let mut flags = [false; WINDOW];
        for t in 0..WINDOW {
            let o = self.obs(start + t as u32)?;
            values[t] = o.value;
            flags[t] = o.is_real;
        }
        let ctx = FrameContext {
            patient_id: &self.series.patient_id,
            parameter: self.series.parameter,
            age_years: demo.age_at_start + f64::from(start) / 12.0,
            gender: demo.gender,
            start_month: start,
        };
        encode_frame(&ctx, &values, &flags)
    }
}

/// All Stage-1 frames of an interpolated series with at least `certain` real
/// months in their span.
pub fn build_stage1_frames(series: &LabSeries, demo: Demographics, certain: u8) -> Result<Vec<Frame>> {
    let Some(zone) = Zone::of(series) else {
        return Ok(Vec::new());
    };
    let r = WINDOW as u32;
    let mut frames = Vec::new();
    // i + r <= m - 1, i.e. the span [i, m - 1] holds more than r months.
    let mut start = zone.t0;
    while start + r < zone.m {
        let real_count = zone.real_count(start)?;
        if real_count >= usize::from(certain) {
            let target_month = start + r + 1;
            frames.push(Frame {
                patient_id: series.patient_id.clone(),
                parameter: series.parameter,
                start_month: start,
                target_month,
                input: zone.encode(demo, start)?,
                target: normalize(zone.obs(target_month)?.value)?,
                gap: 0,
                real_count,
            });
        }
        start += 1;
    }
    Ok(frames)
}

/// The Stage-2 frame: span `[t_m - r, t_m]`, target `y_{t_n}`,
/// `g = n - m - 1`. `None` if the span starts before `t_0` or `g > r/2`.
pub fn build_stage2_frame(series: &LabSeries, demo: Demographics) -> Result<Option<Frame>> {
    let Some(zone) = Zone::of(series) else {
        return Ok(None);
    };
    let Some(n) = series.last_real_month() else {
        return Ok(None);
    };
    let r = WINDOW as u32;
    if zone.m < zone.t0 + r {
        return Ok(None);
    }
    let gap = n - zone.m - 1;
    if gap > MAX_GAP {
        return Ok(None);
    }
    let start = zone.m - r;
    let target = series.value_at(n).expect("last real month present").value;
    Ok(Some(Frame {
        patient_id: series.patient_id.clone(),
        parameter: series.parameter,
        start_month: start,
        target_month: n,
        input: zone.encode(demo, start)?,
        target: normalize(target)?,
        gap,
        real_count: zone.real_count(start)?,
    }))
}
