use thiserror::Error;

use crate::model::MS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a clock reading: {0:?}")]
pub struct ClockParseError(pub String);

/// Parses `HH:MM:SS.mmm` (or `MM:SS.mmm`) into milliseconds since midnight.
///
/// Exactly three fractional digits are required; anything else is rejected
/// rather than completed.
pub fn parse_clock_string(raw: &str) -> Result<i64, ClockParseError> {
    let err = || ClockParseError(raw.to_owned());
    let s = raw.trim();
    let (whole, frac) = s.split_once('.').ok_or_else(err)?;
    if frac.len() != 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let parts: Vec<&str> = whole.split(':').collect();
    let field = |p: &str, max: i64| -> Result<i64, ClockParseError> {
        if p.is_empty() || p.len() > 2 || !p.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let v: i64 = p.parse().map_err(|_| err())?;
        if v > max {
            return Err(err());
        }
        Ok(v)
    };
    let (h, m, sec) = match parts.as_slice() {
        [h, m, s] => (field(h, 23)?, field(m, 59)?, field(s, 59)?),
        [m, s] => (0, field(m, 59)?, field(s, 59)?),
        _ => return Err(err()),
    };
    let ms: i64 = frac.parse().map_err(|_| err())?;
    Ok(((h * 60 + m) * 60 + sec) * 1000 + ms)
}

/// Formats milliseconds since midnight as `HH:MM:SS.mmm`.
pub fn format_clock_string(ms: i64) -> String {
    assert!((0..MS_PER_DAY).contains(&ms), "clock value {ms} outside one day");
    let (s, milli) = (ms / 1000, ms % 1000);
    format!("{:02}:{:02}:{:02}.{:03}", s / 3600, (s / 60) % 60, s % 60, milli)
}
