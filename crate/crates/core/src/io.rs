//! Series file formats: plain text (one timestamp per line) and JSON Lines.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};
use crate::model::Label;
use crate::series::EventSeries;

/// One JSONL line. `a` and `b` override the default window `[0, t_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub id: String,
    pub timestamps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl SeriesRecord {
    pub fn from_series(series: &EventSeries) -> Self {
        Self {
            id: series.id().to_string(),
            timestamps: series.timestamps().to_vec(),
            a: Some(series.window_start()),
            b: Some(series.window_end()),
        }
    }

    pub fn into_series(self) -> Result<EventSeries> {
        EventSeries::new(self.id, &self.timestamps, self.a, self.b)
    }
}

/// Ground-truth labels written next to simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub labels: Vec<Label>,
}

fn parse_error(line: usize, message: impl ToString) -> BuscaError {
    BuscaError::Parse {
        line,
        message: message.to_string(),
    }
}

/// A single series from one timestamp per line. Blank lines are skipped.
pub fn parse_plain(id: &str, text: &str) -> Result<EventSeries> {
    let mut raw = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        raw.push(line.parse::<f64>().map_err(|e| parse_error(k + 1, format!("{line:?}: {e}")))?);
    }
    EventSeries::new(id, &raw, None, None)
}

/// One result per non-blank line, so a malformed line does not sink the rest.
/// Errors carry the 1-based line number.
pub fn parse_jsonl(text: &str) -> Vec<Result<EventSeries>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(k, line)| {
            let record: SeriesRecord = serde_json::from_str(line).map_err(|e| parse_error(k + 1, e))?;
            record.into_series().map_err(|e| parse_error(k + 1, e))
        })
        .collect()
}

fn looks_like_jsonl(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e == "jsonl" || e == "json") || text.trim_start().starts_with('{')
}

/// Reads either format. A plain-text file yields one series named after the file stem.
pub fn read_series_file(path: &Path) -> Result<Vec<Result<EventSeries>>> {
    let text = std::fs::read_to_string(path).map_err(|e| BuscaError::Io(format!("{}: {e}", path.display())))?;
    if looks_like_jsonl(path, &text) {
        return Ok(parse_jsonl(&text));
    }
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(vec![parse_plain(&id, &text)])
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(out: &mut W, records: impl IntoIterator<Item = T>) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, &r).map_err(|e| BuscaError::Io(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| BuscaError::Io(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_text_defaults_the_window() {
        let s = parse_plain("x", "1.5\n\n 2.0 \n4\n").unwrap();
        assert_eq!(s.timestamps(), &[1.5, 2.0, 4.0]);
        assert_eq!((s.window_start(), s.window_end()), (0.0, 4.0));
        assert_eq!(s.id(), "x");
    }

    #[test]
    fn plain_text_reports_the_line() {
        let err = parse_plain("x", "1\n\nabc\n").unwrap_err();
        assert!(matches!(err, BuscaError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn jsonl_keeps_going_past_bad_lines() {
        let text = r#"{"id":"a","timestamps":[1,2,3]}
not json
{"id":"b","timestamps":[1,2],"a":0.5,"b":10}

{"id":"c","timestamps":[3,3]}
"#;
        let out = parse_jsonl(text);
        assert_eq!(out.len(), 4);
        assert_eq!(out[0].as_ref().unwrap().id(), "a");
        assert!(matches!(out[1], Err(BuscaError::Parse { line: 2, .. })));
        assert_eq!(out[2].as_ref().unwrap().window_end(), 10.0);
        assert!(matches!(out[3], Err(BuscaError::Parse { line: 5, .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let s = EventSeries::new("r", &[0.25, 1.0, 7.5], Some(0.0), Some(9.0)).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, [SeriesRecord::from_series(&s)]).unwrap();
        let back = parse_jsonl(std::str::from_utf8(&buf).unwrap());
        assert_eq!(back[0].as_ref().unwrap(), &s);
    }
}
