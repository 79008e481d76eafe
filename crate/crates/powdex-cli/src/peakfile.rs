//! Peak list files.
//!
//! ```text
//! #format 2theta
//! #wavelength 1.5406
//! #zeroshift 0.02
//! 12.345  0.002
//! ```
//!
//! Positions are q (Å⁻²) unless `#format 2theta` is given, in which case a
//! wavelength is required. Other `#` lines are comments.

use std::fmt;

use powdex::synth::{q_err_from_two_theta, q_from_two_theta};
use powdex::PeakList;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Q,
    TwoTheta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakFile {
    pub format: Format,
    pub wavelength: Option<f64>,
    pub zeroshift: f64,
    pub rows: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError { line, msg: msg.into() }
}

fn number(tok: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = tok.parse().map_err(|_| err(line, format!("not a number: '{tok}'")))?;
    if !v.is_finite() {
        return Err(err(line, format!("not a finite number: '{tok}'")));
    }
    Ok(v)
}

pub fn parse(text: &str) -> Result<PeakFile, ParseError> {
    let mut pf = PeakFile { format: Format::Q, wavelength: None, zeroshift: 0.0, rows: Vec::new() };
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            match it.next() {
                Some("format") => {
                    pf.format = match it.next() {
                        Some("q") => Format::Q,
                        Some("2theta") => Format::TwoTheta,
                        other => return Err(err(line, format!("unknown format {other:?}"))),
                    }
                }
                Some("wavelength") => {
                    let v = number(it.next().ok_or_else(|| err(line, "missing wavelength"))?, line)?;
                    if v <= 0.0 {
                        return Err(err(line, "wavelength must be positive"));
                    }
                    pf.wavelength = Some(v);
                }
                Some("zeroshift") => {
                    pf.zeroshift = number(it.next().ok_or_else(|| err(line, "missing zero shift"))?, line)?;
                }
                _ => {}
            }
            continue;
        }
        let mut it = t.split_whitespace();
        let pos = number(it.next().unwrap(), line)?;
        let e = number(it.next().ok_or_else(|| err(line, "expected '<position> <error>'"))?, line)?;
        if it.next().is_some() {
            return Err(err(line, "too many columns"));
        }
        if pos <= 0.0 {
            return Err(err(line, "position must be positive"));
        }
        if e < 0.0 {
            return Err(err(line, "error must be non-negative"));
        }
        pf.rows.push((pos, e));
    }
    if pf.format == Format::TwoTheta && pf.wavelength.is_none() {
        return Err(err(0, "#format 2theta needs #wavelength"));
    }
    Ok(pf)
}

impl PeakFile {
    /// q-values with errors. `extra_shift` adds to the file's zero shift.
    pub fn to_peaks(&self, extra_shift: f64) -> Result<PeakList, String> {
        let rows: Vec<(f64, f64)> = match self.format {
            Format::Q => self.rows.clone(),
            Format::TwoTheta => {
                let lam = self.wavelength.expect("checked while parsing");
                let shift = self.zeroshift + extra_shift;
                self.rows
                    .iter()
                    .map(|&(tt, e)| {
                        let t = tt - shift;
                        (q_from_two_theta(t, lam), q_err_from_two_theta(t, e, lam))
                    })
                    .collect()
            }
        };
        if rows.is_empty() {
            return Err("the peak list is empty".into());
        }
        PeakList::new(rows).map_err(|e| e.to_string())
    }
}

/// Writes q-values in the file format.
pub fn write_q(peaks: &PeakList) -> String {
    let mut s = String::from("#format q\n");
    for p in peaks.iter() {
        s.push_str(&format!("{:.10} {:.3e}\n", p.q_val, p.q_err));
    }
    s
}
