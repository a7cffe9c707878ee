//! Scattering feature file and classifier-head file formats.
//!
//! Features file: magic `SCAT`, version u16, input_length u32, feature dim
//! u32, count u32, then per window: subject length u16 + bytes, epoch index
//! u32, label u8, dim little-endian f64 coefficients. The path index is
//! exported separately as JSON for auditability.
//!
//! Head file: magic `STNN`, version u16, dims (in, h1, h2, out as u32),
//! standardizer mean/std (dim f64 each), then the flat parameter vector.

use super::head::{Standardizer, StHead};
use crate::ingest::StageLabel;
use std::io::{Read, Write};
use thiserror::Error;

pub const FEATURES_MAGIC: &[u8; 4] = b"SCAT";
pub const FEATURES_VERSION: u16 = 1;
pub const HEAD_MAGIC: &[u8; 4] = b"STNN";
pub const HEAD_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("bad magic: not a scattering artifact file")]
    BadMagic,
    #[error("unsupported file version {0}")]
    BadVersion(u16),
    #[error("file ends early while reading {0}")]
    Truncated(&'static str),
    #[error("unknown label code {0}")]
    BadLabel(u8),
    #[error("inconsistent dimensions: {0}")]
    Dims(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One window's scattering coefficients with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub subject_id: String,
    pub epoch_index: u32,
    pub label: StageLabel,
    pub coefficients: Vec<f64>,
}

pub fn write_features<W: Write>(
    out: &mut W,
    input_length: u32,
    records: &[FeatureRecord],
) -> Result<(), FeatureFileError> {
    let dim = records.first().map_or(0, |r| r.coefficients.len());
    out.write_all(FEATURES_MAGIC)?;
    out.write_all(&FEATURES_VERSION.to_le_bytes())?;
    out.write_all(&input_length.to_le_bytes())?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&(records.len() as u32).to_le_bytes())?;
    for r in records {
        if r.coefficients.len() != dim {
            return Err(FeatureFileError::Dims(format!(
                "record for {:?} has {} coefficients, expected {dim}",
                r.subject_id,
                r.coefficients.len()
            )));
        }
        let sid = r.subject_id.as_bytes();
        out.write_all(&(sid.len() as u16).to_le_bytes())?;
        out.write_all(sid)?;
        out.write_all(&r.epoch_index.to_le_bytes())?;
        out.write_all(&[r.label.code()])?;
        for v in &r.coefficients {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_features<R: Read>(
    input: &mut R,
) -> Result<(u32, Vec<FeatureRecord>), FeatureFileError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &'static str| -> Result<&[u8], FeatureFileError> {
        if *pos + n > bytes.len() {
            return Err(FeatureFileError::Truncated(what));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4, "magic")? != FEATURES_MAGIC {
        return Err(FeatureFileError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut pos, 2, "version")?.try_into().unwrap());
    if version != FEATURES_VERSION {
        return Err(FeatureFileError::BadVersion(version));
    }
    let input_length = u32::from_le_bytes(take(&mut pos, 4, "input length")?.try_into().unwrap());
    let dim = u32::from_le_bytes(take(&mut pos, 4, "dim")?.try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(take(&mut pos, 4, "count")?.try_into().unwrap());

    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let sid_len = u16::from_le_bytes(take(&mut pos, 2, "subject length")?.try_into().unwrap());
        let subject_id =
            String::from_utf8_lossy(take(&mut pos, sid_len as usize, "subject id")?).into_owned();
        let epoch_index = u32::from_le_bytes(take(&mut pos, 4, "epoch index")?.try_into().unwrap());
        let code = take(&mut pos, 1, "label")?[0];
        let label = StageLabel::from_code(code).ok_or(FeatureFileError::BadLabel(code))?;
        let coefficients = take(&mut pos, dim * 8, "coefficients")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(FeatureRecord {
            subject_id,
            epoch_index,
            label,
            coefficients,
        });
    }
    Ok((input_length, records))
}

pub fn write_head<W: Write>(
    out: &mut W,
    head: &StHead,
    standardizer: &Standardizer,
) -> Result<(), FeatureFileError> {
    if standardizer.mean.len() != head.in_dim || standardizer.std.len() != head.in_dim {
        return Err(FeatureFileError::Dims(format!(
            "standardizer width {} does not match head input {}",
            standardizer.mean.len(),
            head.in_dim
        )));
    }
    out.write_all(HEAD_MAGIC)?;
    out.write_all(&HEAD_VERSION.to_le_bytes())?;
    for v in [
        head.in_dim,
        head.hidden[0],
        head.hidden[1],
        head.out_dim,
    ] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in standardizer.mean.iter().chain(&standardizer.std).chain(&head.params) {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_head<R: Read>(input: &mut R) -> Result<(StHead, Standardizer), FeatureFileError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &'static str| -> Result<&[u8], FeatureFileError> {
        if *pos + n > bytes.len() {
            return Err(FeatureFileError::Truncated(what));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4, "magic")? != HEAD_MAGIC {
        return Err(FeatureFileError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut pos, 2, "version")?.try_into().unwrap());
    if version != HEAD_VERSION {
        return Err(FeatureFileError::BadVersion(version));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = u32::from_le_bytes(take(&mut pos, 4, "dims")?.try_into().unwrap()) as usize;
    }
    let [in_dim, h1, h2, out_dim] = dims;
    if [h1, h2] != [20, 20] || out_dim != 2 {
        return Err(FeatureFileError::Dims(format!(
            "unexpected head shape {in_dim}-{h1}-{h2}-{out_dim}"
        )));
    }
    let mut read_vec = |len: usize, what: &'static str,
                        pos: &mut usize|
     -> Result<Vec<f64>, FeatureFileError> {
        Ok(take(pos, len * 8, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mean = read_vec(in_dim, "standardizer mean", &mut pos)?;
    let std = read_vec(in_dim, "standardizer std", &mut pos)?;
    let n_params = StHead::param_count(in_dim, [h1, h2], out_dim);
    let params = read_vec(n_params, "parameters", &mut pos)?;
    if pos != bytes.len() {
        return Err(FeatureFileError::Dims("trailing bytes".into()));
    }
    Ok((
        StHead {
            in_dim,
            hidden: [h1, h2],
            out_dim,
            params,
        },
        Standardizer { mean, std },
    ))
}
