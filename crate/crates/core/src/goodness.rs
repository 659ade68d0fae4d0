//! Goodness-of-fit statistics for the two components of a disentangled series.

use crate::error::{BuscaError, Result};
use crate::stats::{linear_fit, weighted_linear_fit};

/// R² of the least-squares line through the counting process `(t_i, i)`.
///
/// Close to one when the events look like a homogeneous Poisson process.
pub fn r2_poisson(events: &[f64]) -> Result<f64> {
    if events.len() < 3 {
        return Err(BuscaError::TooFewEvents {
            required: 3,
            actual: events.len(),
        });
    }
    let counts: Vec<f64> = (1..=events.len()).map(|i| i as f64).collect();
    linear_fit(events, &counts)
        .map(|f| f.r2)
        .ok_or_else(|| BuscaError::Degenerate("events have no spread in time".into()))
}

/// R² of the least-squares line through the empirical odds ratio of the gaps.
///
/// With sorted gaps `g_1 <= ... <= g_m` the odds ratio at `g_i` is `i/(m-i)`; the
/// largest gap, where it is infinite, is left out. A self-feeding process gives an
/// approximately linear odds ratio. The empirical odds ratio at `F = i/m` has
/// variance proportional to `F/(1-F)^3`, so points are weighted by its inverse.
pub fn r2_sfp(events: &[f64]) -> Result<f64> {
    if events.len() < 4 {
        return Err(BuscaError::TooFewEvents {
            required: 4,
            actual: events.len(),
        });
    }
    let mut gaps: Vec<f64> = events.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len();
    let odds: Vec<f64> = (1..m).map(|i| i as f64 / (m - i) as f64).collect();
    let weights: Vec<f64> = (1..m)
        .map(|i| {
            let f = i as f64 / m as f64;
            (1.0 - f).powi(3) / f
        })
        .collect();
    weighted_linear_fit(&gaps[..m - 1], &odds, &weights)
        .map(|f| f.r2)
        .ok_or_else(|| BuscaError::Degenerate("all gaps are equal".into()))
}
