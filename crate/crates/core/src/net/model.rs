//! Trained models and the weight-file format.
//!
//! Layout (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `GLP1` |
//! | 2     | format version (u16) |
//! | 1     | parameter id (u8, [`LabParameter::ALL`] index) |
//! | 1     | certain (u8) |
//! | 8 x 516 | weights as f64, in [`GlpParams::to_vec`] order |
//! | 4     | CRC-32 (IEEE) of all preceding bytes |

use std::path::Path;

use crate::cohort::LabParameter;
use crate::encoding::Window;
use crate::error::{GlpError, Result, WeightFileError};
use crate::framing::MAX_CERTAIN;

use super::forward::{rollout, Rollout};
use super::{GlpParams, PARAM_COUNT};

pub const MAGIC: [u8; 4] = *b"GLP1";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 8;
pub const WEIGHT_FILE_LEN: usize = HEADER_LEN + 8 * PARAM_COUNT + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GlpModel {
    pub params: GlpParams,
    pub parameter: LabParameter,
    pub certain: u8,
    pub version: u16,
}

impl GlpModel {
    pub fn new(params: GlpParams, parameter: LabParameter, certain: u8) -> Self {
        Self { params, parameter, certain, version: FORMAT_VERSION }
    }

    pub fn init(parameter: LabParameter, certain: u8, rng: &mut impl rand::Rng) -> Self {
        Self::new(GlpParams::init(rng), parameter, certain)
    }

    pub fn rollout(&self, input: &Window, gap: u32) -> Rollout {
        rollout(&self.params, self.parameter, input, gap)
    }

    pub fn predict(&self, input: &Window, gap: u32) -> f64 {
        self.rollout(input, gap).prediction
    }

    /// Header and weights, without the checksum trailer.
    fn body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(WEIGHT_FILE_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.parameter.id());
        out.push(self.certain);
        self.params.visit(&mut |x| out.extend_from_slice(&x.to_le_bytes()));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body();
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightFileError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(WeightFileError::BadMagic);
        }
        if bytes.len() != WEIGHT_FILE_LEN {
            return Err(WeightFileError::Size { expected: WEIGHT_FILE_LEN, got: bytes.len() });
        }
        let body = &bytes[..WEIGHT_FILE_LEN - 4];
        let stored = u32::from_le_bytes(bytes[WEIGHT_FILE_LEN - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(WeightFileError::Checksum { stored, computed });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(WeightFileError::Version(version));
        }
        let parameter = LabParameter::from_id(bytes[6]).ok_or(WeightFileError::UnknownParameter(bytes[6]))?;
        let certain = bytes[7];
        if certain > MAX_CERTAIN {
            return Err(WeightFileError::BadCertain(certain));
        }
        let mut values = Vec::with_capacity(PARAM_COUNT);
        for (i, chunk) in body[HEADER_LEN..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(WeightFileError::NonFinite(i));
            }
            values.push(v);
        }
        let params = GlpParams::from_slice(&values).expect("length fixed by file size");
        Ok(Self { params, parameter, certain, version })
    }

    /// CRC-32 of header and weights; the value stored in the file trailer.
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.body())
    }

    /// Fail unless this model was trained for `expected`.
    pub fn expect_parameter(&self, expected: LabParameter) -> Result<()> {
        if self.parameter != expected {
            return Err(GlpError::ParameterMismatch { expected, found: self.parameter });
        }
        Ok(())
    }
}

pub fn save_weights(model: &GlpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<GlpModel> {
    let bytes = std::fs::read(path)?;
    Ok(GlpModel::from_bytes(&bytes)?)
}
