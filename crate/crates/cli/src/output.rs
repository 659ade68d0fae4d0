//! CSV sink, float formatting and failure reporting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

/// Ten significant digits, '.' separator, scientific notation only for extreme magnitudes.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("round trip of a formatted float");
    let mag = rounded.abs();
    if rounded == 0.0 || (1e-5..1e15).contains(&mag) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

pub fn open_out(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// How a command ended, mapped to the process exit status.
pub enum Outcome {
    Done,
    /// Per-item failures, already reported on standard error.
    Partial(usize),
    /// Unusable invocation or input.
    Invalid(String),
    /// Output could not be written.
    Fatal(String),
}

impl Outcome {
    pub fn from_failures(failures: &[String]) -> Self {
        for f in failures {
            eprintln!("failed: {f}");
        }
        if failures.is_empty() {
            Outcome::Done
        } else {
            Outcome::Partial(failures.len())
        }
    }

    pub fn exit_code(self) -> ExitCode {
        match self {
            Outcome::Done => ExitCode::SUCCESS,
            Outcome::Partial(k) => {
                eprintln!("{k} item(s) failed");
                ExitCode::from(1)
            }
            Outcome::Invalid(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            Outcome::Fatal(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

/// Writes a header and rows through one CSV writer.
pub fn write_csv(path: Option<&Path>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), String> {
    let sink = open_out(path).map_err(|e| format!("cannot open output: {e}"))?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(&row).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(0.1 + 0.2), "0.3");
        assert_eq!(fmt_float(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_float(123456.789012345), "123456.789");
        assert_eq!(fmt_float(2.0), "2");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(1.234567890123e-40), "1.23456789e-40");
        assert_eq!(fmt_float(f64::NAN), "NaN");
        assert_eq!(fmt_float(-5.0), "-5");
    }
}
