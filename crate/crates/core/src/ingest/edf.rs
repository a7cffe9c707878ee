//! EDF/EDF+ reader for continuous recordings with 16-bit samples.
//!
//! Layout: one 256-byte ASCII header, 256 header bytes per signal
//! (field-major), then fixed-size data records of little-endian two's
//! complement samples. Annotation-only EDF+ signals are skipped;
//! discontinuous (`EDF+D`) files are rejected.

use super::{Channel, ParseError, Recording};

const HEADER_LEN: usize = 256;

struct Field {
    offset: usize,
    len: usize,
    name: &'static str,
}

fn ascii_field<'a>(bytes: &'a [u8], f: &Field) -> Result<&'a str, ParseError> {
    let end = f.offset + f.len;
    if end > bytes.len() {
        return Err(ParseError::Truncated {
            expected: end,
            actual: bytes.len(),
        });
    }
    let raw = &bytes[f.offset..end];
    std::str::from_utf8(raw)
        .map(str::trim)
        .map_err(|_| ParseError::NonAsciiNumeric {
            field: f.name,
            offset: f.offset,
            text: String::from_utf8_lossy(raw).into_owned(),
        })
}

fn int_field(bytes: &[u8], f: &Field) -> Result<i64, ParseError> {
    let text = ascii_field(bytes, f)?;
    text.parse::<i64>().map_err(|_| ParseError::NonAsciiNumeric {
        field: f.name,
        offset: f.offset,
        text: text.to_owned(),
    })
}

fn float_field(bytes: &[u8], f: &Field) -> Result<f64, ParseError> {
    let text = ascii_field(bytes, f)?;
    text.parse::<f64>()
        .map_err(|_| ParseError::NonAsciiNumeric {
            field: f.name,
            offset: f.offset,
            text: text.to_owned(),
        })
}

struct SignalHeader {
    label: String,
    physical_unit: String,
    physical_min: f64,
    physical_max: f64,
    digital_min: i32,
    digital_max: i32,
    samples_per_record: usize,
}

impl SignalHeader {
    fn is_annotation(&self) -> bool {
        self.label == "EDF Annotations" || self.label == "BDF Annotations"
    }
}

/// Parses an EDF byte stream into a [`Recording`]. The subject id is taken
/// from the patient-identification header field (callers may override it).
pub fn parse_edf(bytes: &[u8]) -> Result<Recording, ParseError> {
    if bytes.len() < HEADER_LEN {
        return Err(ParseError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }

    let patient = ascii_field(
        bytes,
        &Field {
            offset: 8,
            len: 80,
            name: "patient",
        },
    )?;
    let start_date = ascii_field(
        bytes,
        &Field {
            offset: 168,
            len: 8,
            name: "start_date",
        },
    )?;
    let start_time = ascii_field(
        bytes,
        &Field {
            offset: 176,
            len: 8,
            name: "start_time",
        },
    )?;
    let reserved = ascii_field(
        bytes,
        &Field {
            offset: 192,
            len: 44,
            name: "reserved",
        },
    )?;
    if reserved.starts_with("EDF+D") {
        return Err(ParseError::Discontinuous);
    }

    let n_records = int_field(
        bytes,
        &Field {
            offset: 236,
            len: 8,
            name: "n_data_records",
        },
    )?;
    let record_duration = float_field(
        bytes,
        &Field {
            offset: 244,
            len: 8,
            name: "record_duration",
        },
    )?;
    let n_signals = int_field(
        bytes,
        &Field {
            offset: 252,
            len: 4,
            name: "n_signals",
        },
    )?;
    if n_signals <= 0 {
        return Err(ParseError::BadHeader {
            offset: 252,
            message: format!("signal count {n_signals} must be positive"),
        });
    }
    let ns = n_signals as usize;

    let signal_header_end = HEADER_LEN + 256 * ns;
    if bytes.len() < signal_header_end {
        return Err(ParseError::Truncated {
            expected: signal_header_end,
            actual: bytes.len(),
        });
    }

    // Per-signal header fields are stored field-major: all labels, then all
    // transducers, and so on.
    let block = |field_start: usize, width: usize, i: usize, name: &'static str| Field {
        offset: HEADER_LEN + field_start * ns + width * i,
        len: width,
        name,
    };
    let mut headers = Vec::with_capacity(ns);
    for i in 0..ns {
        let label = ascii_field(bytes, &block(0, 16, i, "label"))?.to_owned();
        let physical_unit = ascii_field(bytes, &block(96, 8, i, "physical_dimension"))?.to_owned();
        let physical_min = float_field(bytes, &block(104, 8, i, "physical_min"))?;
        let physical_max = float_field(bytes, &block(112, 8, i, "physical_max"))?;
        let digital_min = int_field(bytes, &block(120, 8, i, "digital_min"))? as i32;
        let digital_max = int_field(bytes, &block(128, 8, i, "digital_max"))? as i32;
        let samples_per_record = int_field(bytes, &block(216, 8, i, "samples_per_record"))?;
        if samples_per_record <= 0 {
            return Err(ParseError::BadHeader {
                offset: HEADER_LEN + 216 * ns + 8 * i,
                message: format!("samples per record {samples_per_record} must be positive"),
            });
        }
        headers.push(SignalHeader {
            label,
            physical_unit,
            physical_min,
            physical_max,
            digital_min,
            digital_max,
            samples_per_record: samples_per_record as usize,
        });
    }
    for (i, h) in headers.iter().enumerate() {
        if !h.is_annotation() && h.digital_max == h.digital_min {
            return Err(ParseError::FlatDigitalRange {
                signal: i,
                value: h.digital_min,
            });
        }
    }

    let record_bytes: usize = headers.iter().map(|h| h.samples_per_record * 2).sum();
    if record_bytes == 0 {
        return Err(ParseError::Empty);
    }
    let data = &bytes[signal_header_end..];
    let n_records = if n_records >= 0 {
        let expected = signal_header_end + n_records as usize * record_bytes;
        if bytes.len() < expected {
            return Err(ParseError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        n_records as usize
    } else {
        // Unknown record count (-1): infer from the remaining length, which
        // must be an exact multiple of the record size.
        if data.len() % record_bytes != 0 {
            return Err(ParseError::Truncated {
                expected: signal_header_end + (data.len() / record_bytes + 1) * record_bytes,
                actual: bytes.len(),
            });
        }
        data.len() / record_bytes
    };
    if n_records == 0 {
        return Err(ParseError::Empty);
    }
    if !(record_duration > 0.0) {
        return Err(ParseError::BadHeader {
            offset: 244,
            message: format!("record duration {record_duration} must be positive"),
        });
    }

    let mut channels: Vec<Option<Channel>> = headers
        .iter()
        .map(|h| {
            if h.is_annotation() {
                None
            } else {
                Some(Channel {
                    label: h.label.clone(),
                    sampling_rate: h.samples_per_record as f64 / record_duration,
                    samples: Vec::with_capacity(h.samples_per_record * n_records),
                    physical_unit: h.physical_unit.clone(),
                })
            }
        })
        .collect();

    let mut pos = 0usize;
    for _ in 0..n_records {
        for (h, slot) in headers.iter().zip(channels.iter_mut()) {
            let nb = h.samples_per_record * 2;
            let chunk = &data[pos..pos + nb];
            pos += nb;
            let Some(ch) = slot else { continue };
            let gain =
                (h.physical_max - h.physical_min) / (h.digital_max as f64 - h.digital_min as f64);
            for pair in chunk.chunks_exact(2) {
                let digital = i16::from_le_bytes([pair[0], pair[1]]) as f64;
                ch.samples
                    .push((digital - h.digital_min as f64) * gain + h.physical_min);
            }
        }
    }

    let start = if start_date.is_empty() && start_time.is_empty() {
        None
    } else {
        Some(format!("{start_date} {start_time}"))
    };
    let subject_id = if patient.is_empty() {
        "unknown".to_owned()
    } else {
        patient.to_owned()
    };
    let channels: Vec<Channel> = channels.into_iter().flatten().collect();
    if channels.is_empty() {
        return Err(ParseError::Empty);
    }
    Recording::new(subject_id, channels, start)
}
