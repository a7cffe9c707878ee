//! Model file format.
//!
//! Layout: magic `SMNN`, format version u16, architecture block
//! (input_length, n_blocks, filters, kernel, dense sizes, n_outputs as u32;
//! dropout_p f64; rng_seed u64), then every parameter as little-endian f64
//! in segment order (per block: stride-1 weights, bias, stride-2 weights,
//! bias; then dense1, dense2, output).

use super::{ArchitectureSpec, CnnModel, ShapeError};
use std::io::{Read, Write};
use thiserror::Error;

pub const MODEL_MAGIC: &[u8; 4] = b"SMNN";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    BadVersion(u16),
    #[error("file ends early while reading {0}")]
    Truncated(&'static str),
    #[error("trailing bytes after parameters")]
    TrailingBytes,
    #[error("architecture mismatch: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_model<W: Write>(out: &mut W, model: &CnnModel) -> Result<(), FormatError> {
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&MODEL_VERSION.to_le_bytes())?;
    let s = &model.spec;
    for v in [
        s.input_length,
        s.n_blocks,
        s.filters,
        s.kernel,
        s.dense_sizes[0],
        s.dense_sizes[1],
        s.n_outputs,
    ] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    out.write_all(&s.dropout_p.to_le_bytes())?;
    out.write_all(&model.rng_seed.to_le_bytes())?;
    for seg in model.param_segments() {
        for v in seg {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_model<R: Read>(input: &mut R) -> Result<CnnModel, FormatError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &'static str| -> Result<&[u8], FormatError> {
        if *pos + n > bytes.len() {
            return Err(FormatError::Truncated(what));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4, "magic")? != MODEL_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut pos, 2, "version")?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let read_u32 = |what: &'static str, pos: &mut usize| -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(take(pos, 4, what)?.try_into().unwrap()))
    };
    let input_length = read_u32("input_length", &mut pos)? as usize;
    let n_blocks = read_u32("n_blocks", &mut pos)? as usize;
    let filters = read_u32("filters", &mut pos)? as usize;
    let kernel = read_u32("kernel", &mut pos)? as usize;
    let dense1 = read_u32("dense1", &mut pos)? as usize;
    let dense2 = read_u32("dense2", &mut pos)? as usize;
    let n_outputs = read_u32("n_outputs", &mut pos)? as usize;
    let dropout_p = f64::from_le_bytes(take(&mut pos, 8, "dropout_p")?.try_into().unwrap());
    let rng_seed = u64::from_le_bytes(take(&mut pos, 8, "rng_seed")?.try_into().unwrap());

    // The architecture block must be internally consistent: the block count
    // and layer sizes are functions of the input length.
    let spec = ArchitectureSpec::for_input(input_length)
        .map_err(|e| FormatError::SpecMismatch(e.to_string()))?;
    if n_blocks != spec.n_blocks {
        return Err(FormatError::SpecMismatch(format!(
            "{n_blocks} blocks declared for input length {input_length}, expected {}",
            spec.n_blocks
        )));
    }
    if filters != spec.filters
        || kernel != spec.kernel
        || [dense1, dense2] != spec.dense_sizes
        || n_outputs != spec.n_outputs
    {
        return Err(FormatError::SpecMismatch(format!(
            "layer sizes ({filters} filters, kernel {kernel}, dense {dense1}/{dense2}, \
             {n_outputs} outputs) do not match the fixed architecture"
        )));
    }
    let spec = ArchitectureSpec { dropout_p, ..spec };

    let mut model = CnnModel::zeros(spec, rng_seed);
    for seg in model.param_segments_mut() {
        for v in seg.iter_mut() {
            *v = f64::from_le_bytes(take(&mut pos, 8, "parameters")?.try_into().unwrap());
        }
    }
    if pos != bytes.len() {
        return Err(FormatError::TrailingBytes);
    }
    Ok(model)
}

/// Loads a model and checks it accepts inputs of `input_length` samples.
pub fn load_model_for_input<R: Read>(
    input: &mut R,
    input_length: usize,
) -> Result<CnnModel, FormatError> {
    let model = load_model(input)?;
    if model.spec.input_length != input_length {
        return Err(FormatError::SpecMismatch(format!(
            "model expects {}-sample inputs, run uses {input_length}",
            model.spec.input_length
        )));
    }
    Ok(model)
}

impl CnnModel {
    pub fn save_to_path(&self, path: &std::path::Path) -> Result<(), FormatError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        save_model(&mut file, self)
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<CnnModel, FormatError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        load_model(&mut file)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        save_model(&mut buf, self).expect("in-memory write cannot fail");
        buf
    }

    pub fn check_shape(&self) -> Result<(), ShapeError> {
        ArchitectureSpec::for_input(self.spec.input_length).map(|_| ())
    }
}
