//! Single-column CSV signal reader: one numeric sample per line.

use super::{Channel, ParseError, Recording};

/// Parses a one-value-per-line text signal into a single-channel
/// [`Recording`]. Blank trailing lines are tolerated; interior blank or
/// non-numeric lines are errors carrying the 1-based line number.
pub fn parse_csv_signal(
    text: &str,
    label: &str,
    sampling_rate: f64,
) -> Result<Recording, ParseError> {
    if !(sampling_rate > 0.0) {
        return Err(ParseError::Invalid(format!(
            "sampling rate {sampling_rate} must be positive"
        )));
    }
    let mut samples = Vec::new();
    let mut pending_blank: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if pending_blank.is_none() {
                pending_blank = Some(line_no);
            }
            continue;
        }
        if let Some(blank_line) = pending_blank {
            return Err(ParseError::NonNumericLine {
                line: blank_line,
                text: String::new(),
            });
        }
        let value: f64 = trimmed.parse().map_err(|_| ParseError::NonNumericLine {
            line: line_no,
            text: trimmed.to_owned(),
        })?;
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(ParseError::Empty);
    }
    Recording::new(
        label.to_owned(),
        vec![Channel {
            label: label.to_owned(),
            sampling_rate,
            samples,
            physical_unit: String::new(),
        }],
        None,
    )
}
