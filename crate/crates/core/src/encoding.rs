//! The five-channel per-month feature vector.
//!
//! Channel order: `[ln(1+age), gender, real flag, discrete code, ln(1+value)]`.

use crate::cohort::{Gender, LabParameter};
use crate::error::{GlpError, Result};
use crate::framing::WINDOW;

pub const CHANNELS: usize = 5;
pub const CH_AGE: usize = 0;
pub const CH_GENDER: usize = 1;
pub const CH_FLAG: usize = 2;
pub const CH_CODE: usize = 3;
pub const CH_VALUE: usize = 4;

pub type FeatureRow = [f64; CHANNELS];
pub type Window = [FeatureRow; WINDOW];

/// `ln(1 + x)` for `x >= 0`.
pub fn normalize(x: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(GlpError::Domain(format!("normalize expects x >= 0, got {x}")));
    }
    Ok(x.ln_1p())
}

/// Inverse of [`normalize`]: `exp(y) - 1`.
pub fn denormalize(y: f64) -> f64 {
    y.exp_m1()
}

/// Number of discrete categories for a parameter.
pub fn category_count(parameter: LabParameter) -> u8 {
    match parameter {
        LabParameter::CholHdlRatio | LabParameter::LdlC | LabParameter::LdlHdlRatio => 2,
        LabParameter::GlucoseAc | LabParameter::Wbc | LabParameter::Ua => 3,
    }
}

/// Low / (normal) / high category of a lab value.
pub fn encode_discrete(parameter: LabParameter, value: f64) -> u8 {
    match parameter {
        LabParameter::CholHdlRatio => u8::from(value > 5.0),
        LabParameter::LdlC => u8::from(value > 160.0),
        LabParameter::LdlHdlRatio => u8::from(value > 3.5),
        LabParameter::GlucoseAc => {
            if value <= 100.0 {
                0
            } else if value <= 125.0 {
                1
            } else {
                2
            }
        }
        LabParameter::Wbc => {
            if value < 4.0 {
                0
            } else if value < 9.0 {
                1
            } else {
                2
            }
        }
        LabParameter::Ua => {
            if value <= 3.4 {
                0
            } else if value <= 7.0 {
                1
            } else {
                2
            }
        }
    }
}

/// Who and where a window belongs to; used for encoding and error messages.
#[derive(Debug, Clone)]
pub struct FrameContext<'a> {
    pub patient_id: &'a str,
    pub parameter: LabParameter,
    pub age_years: f64,
    pub gender: Gender,
    pub start_month: u32,
}

pub fn encode_row(parameter: LabParameter, age_n: f64, gender: Gender, is_real: bool, value: f64) -> Result<FeatureRow> {
    Ok([
        age_n,
        gender.as_binary(),
        if is_real { 1.0 } else { 0.0 },
        f64::from(encode_discrete(parameter, value)),
        normalize(value)?,
    ])
}

/// Encode `WINDOW` consecutive months of raw values and real flags.
pub fn encode_frame(ctx: &FrameContext<'_>, values: &[f64; WINDOW], flags: &[bool; WINDOW]) -> Result<Window> {
    let age_n = normalize(ctx.age_years)?;
    let mut out = [[0.0; CHANNELS]; WINDOW];
    for (t, row) in out.iter_mut().enumerate() {
        let v = values[t];
        if !v.is_finite() || v < 0.0 {
            return Err(GlpError::Encoding {
                patient: ctx.patient_id.to_string(),
                parameter: ctx.parameter,
                month: i64::from(ctx.start_month) + t as i64,
            });
        }
        *row = encode_row(ctx.parameter, age_n, ctx.gender, flags[t], v)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log1p_examples() {
        assert_eq!(normalize(0.0).unwrap(), 0.0);
        assert!((normalize(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((denormalize(normalize(137.5).unwrap()) - 137.5).abs() / 137.5 < 1e-12);
        assert!(matches!(normalize(-0.5), Err(GlpError::Domain(_))));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(encode_discrete(LabParameter::GlucoseAc, 110.0), 1);
        assert_eq!(encode_discrete(LabParameter::Wbc, 4.0), 1);
        assert_eq!(encode_discrete(LabParameter::CholHdlRatio, 5.0), 0);
    }

    #[test]
    fn every_threshold_lands_on_the_documented_side() {
        use LabParameter::*;
        let cases = [
            (CholHdlRatio, 5.0, 0),
            (LdlC, 160.0, 0),
            (LdlHdlRatio, 3.5, 0),
            (GlucoseAc, 100.0, 0),
            (GlucoseAc, 125.0, 1),
            (Wbc, 4.0, 1),
            (Wbc, 9.0, 2),
            (Ua, 3.4, 0),
            (Ua, 7.0, 1),
        ];
        for (p, v, code) in cases {
            assert_eq!(encode_discrete(p, v), code, "{p} at {v}");
            let above = encode_discrete(p, v + 1e-9);
            let below = encode_discrete(p, v - 1e-9);
            assert!(below <= code && code <= above);
            assert!(above < category_count(p));
        }
        assert_eq!(encode_discrete(GlucoseAc, 125.0 + 1e-9), 2);
        assert_eq!(encode_discrete(Wbc, 4.0 - 1e-9), 0);
    }

    #[test]
    fn frame_columns() {
        let ctx = FrameContext {
            patient_id: "p",
            parameter: LabParameter::GlucoseAc,
            age_years: 60.0,
            gender: Gender::Male,
            start_month: 0,
        };
        let w = encode_frame(&ctx, &[90.0; WINDOW], &[true; WINDOW]).unwrap();
        for row in &w {
            assert_eq!(row[CH_GENDER], 1.0);
            assert_eq!(row[CH_FLAG], 1.0);
            assert_eq!(row[CH_CODE], 0.0);
            assert_eq!(row[CH_AGE], 61f64.ln());
        }
        let mut vals = [90.0; WINDOW];
        vals[4] = f64::NAN;
        match encode_frame(&ctx, &vals, &[true; WINDOW]) {
            Err(GlpError::Encoding { month, .. }) => assert_eq!(month, 4),
            other => panic!("{other:?}"),
        }
    }
}
