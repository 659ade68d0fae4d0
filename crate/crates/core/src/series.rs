//! Event series: validated, strictly increasing timestamps on an observation window.

use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};

/// A realization of a simple point process observed on the window `(start, end]`.
///
/// Timestamps are strictly increasing and lie inside the window. Time units are
/// whatever the caller uses; nothing is converted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSeries {
    id: String,
    timestamps: Vec<f64>,
    start: f64,
    end: f64,
}

impl EventSeries {
    /// Validates `raw` and builds a series. See [`validate_series`].
    pub fn new(
        id: impl Into<String>,
        raw: &[f64],
        start: Option<f64>,
        end: Option<f64>,
    ) -> Result<Self> {
        let mut series = validate_series(raw, start, end)?;
        series.id = id.into();
        Ok(series)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn window_start(&self) -> f64 {
        self.start
    }

    pub fn window_end(&self) -> f64 {
        self.end
    }

    /// Length of the observation window, `b - a`.
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn first(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn last(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1]
    }

    /// Inter-event gaps `t_{i+1} - t_i`.
    pub fn gaps(&self) -> Vec<f64> {
        self.timestamps.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Number of events at or before `t`.
    pub fn count_until(&self, t: f64) -> Result<usize> {
        counting_function(self, t)
    }

    /// Applies `t -> scale * t + shift` to timestamps and window alike.
    pub fn rescaled(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() || !shift.is_finite() {
            return Err(BuscaError::InvalidParameter(format!(
                "rescale requires a positive finite scale, got {scale}"
            )));
        }
        let timestamps: Vec<f64> = self.timestamps.iter().map(|t| scale * t + shift).collect();
        Self::new(
            self.id.clone(),
            &timestamps,
            Some(scale * self.start + shift),
            Some(scale * self.end + shift),
        )
    }

    pub(crate) fn require_events(&self, required: usize) -> Result<()> {
        if self.len() < required {
            return Err(BuscaError::TooFewEvents {
                required,
                actual: self.len(),
            });
        }
        Ok(())
    }
}

/// Sorts and checks raw timestamps.
///
/// Coincident timestamps are rejected rather than merged. When the window bounds
/// are absent the window defaults to `[0, t_n]`.
pub fn validate_series(raw: &[f64], start: Option<f64>, end: Option<f64>) -> Result<EventSeries> {
    if raw.is_empty() {
        return Err(BuscaError::EmptySeries);
    }
    if let Some(index) = raw.iter().position(|t| !t.is_finite()) {
        return Err(BuscaError::NonFinite { index });
    }
    let mut timestamps = raw.to_vec();
    timestamps.sort_by(f64::total_cmp);
    if let Some(w) = timestamps.windows(2).find(|w| w[0] == w[1]) {
        return Err(BuscaError::DuplicateTimestamp { value: w[0] });
    }

    let first = timestamps[0];
    let last = timestamps[timestamps.len() - 1];
    let start = start.unwrap_or(0.0);
    let end = end.unwrap_or(last);
    if !start.is_finite() || !end.is_finite() || start >= end {
        return Err(BuscaError::InvalidWindow { start, end });
    }
    for value in [first, last] {
        if value < start || value > end {
            return Err(BuscaError::TimestampOutsideWindow { value, start, end });
        }
    }

    Ok(EventSeries {
        id: String::new(),
        timestamps,
        start,
        end,
    })
}

/// `N(t)`: the number of events with `t_i <= t`. Right-continuous.
pub fn counting_function(series: &EventSeries, t: f64) -> Result<usize> {
    if !(t >= series.start && t <= series.end) {
        return Err(BuscaError::TimeOutsideWindow {
            t,
            start: series.start,
            end: series.end,
        });
    }
    Ok(series.timestamps.partition_point(|&x| x <= t))
}
