//! CSV reports: header row, LF line endings, floats with 6 significant digits.

use super::IoError;
use std::path::Path;

/// Formats a float with 6 significant digits. Values that round to an
/// integer in that budget keep a trailing `.0` so the column stays
/// recognizably numeric; non-finite values print as `nan`/`inf`.
pub fn format_sig6(value: f64) -> String {
    if value.is_nan() {
        return "nan".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if value == 0.0 {
        return "0.0".to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    let decimals = (5 - exponent).max(0) as usize;
    let s = format!("{value:.decimals$}");
    // Trim surplus trailing zeros but keep one digit after the point.
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0');
        let trimmed = if trimmed.ends_with('.') {
            &s[..trimmed.len() + 1]
        } else {
            trimmed
        };
        trimmed.to_string()
    } else {
        format!("{s}.0")
    }
}

/// Writes rows as CSV with LF endings and a leading header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    writer
        .write_record(header)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(IoError::format(
                path,
                format!("row has {} fields, header has {}", row.len(), header.len()),
            ));
        }
        writer
            .write_record(row)
            .map_err(|e| IoError::format(path, e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| IoError::io(path, e))
}
