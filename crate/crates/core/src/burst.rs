//! Burst detection: segmented least squares over the SFP-labelled events and burst power.

use serde::{Deserialize, Serialize};

use crate::disentangle::{disentangle, DEFAULT_REPLICATIONS};
use crate::error::{BuscaError, Result};
use crate::model::{Label, LabelAssignment, MixtureFit};
use crate::series::EventSeries;
use crate::stats::linear_fit;

pub const DEFAULT_MAX_BLOCKS: usize = 200;
pub const DEFAULT_TAU_THRESHOLD: f64 = 1.0;
/// The default penalty is the single-segment residual variance divided by this.
pub const PENALTY_DIVISOR: f64 = 20.0;

/// Candidate breakpoints: events at evenly spaced count percentiles plus the events
/// nearest to evenly spaced times, sorted and deduplicated.
pub fn reduce_breakpoints(sfp_events: &[f64], max_blocks: usize) -> Result<Vec<f64>> {
    let m = sfp_events.len();
    if m < 2 {
        return Err(BuscaError::TooFewEvents { required: 2, actual: m });
    }
    if max_blocks < 2 {
        return Err(BuscaError::InvalidParameter("max_blocks must be >= 2".into()));
    }
    let per_grid = (max_blocks / 2).max(2);
    let (first, last) = (sfp_events[0], sfp_events[m - 1]);
    let mut picks: Vec<usize> = Vec::with_capacity(2 * per_grid);
    for k in 0..per_grid {
        let q = k as f64 / (per_grid - 1) as f64;
        picks.push((q * (m - 1) as f64).round() as usize);
        let target = first + q * (last - first);
        let pos = sfp_events.partition_point(|&t| t < target);
        let nearest = if pos == 0 {
            0
        } else if pos == m || target - sfp_events[pos - 1] <= sfp_events[pos] - target {
            pos - 1
        } else {
            pos
        };
        picks.push(nearest);
    }
    picks.sort_unstable();
    picks.dedup();
    Ok(picks.into_iter().map(|i| sfp_events[i]).collect())
}

/// A segment between candidate indices `start <= end`, as chosen by [`segment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSegment {
    pub start: usize,
    pub end: usize,
}

/// Least-squares cost of every candidate pair from prefix sums of `(t, N(t))`.
struct SegmentCost {
    /// Event index of each candidate.
    at: Vec<usize>,
    sums: Vec<[f64; 5]>,
}

impl SegmentCost {
    fn new(events: &[f64], candidates: &[f64]) -> Self {
        let origin = events[0];
        let mut sums = Vec::with_capacity(events.len() + 1);
        let mut acc = [0.0; 5];
        sums.push(acc);
        for (i, &t) in events.iter().enumerate() {
            let (x, y) = (t - origin, (i + 1) as f64);
            acc[0] += x;
            acc[1] += y;
            acc[2] += x * x;
            acc[3] += x * y;
            acc[4] += y * y;
            sums.push(acc);
        }
        let at = candidates
            .iter()
            .map(|&c| events.partition_point(|&t| t < c))
            .collect();
        Self { at, sums }
    }

    /// SSE of the line through events from candidate `j` to candidate `k` inclusive.
    fn sse(&self, j: usize, k: usize) -> f64 {
        let (lo, hi) = (self.at[j], self.at[k] + 1);
        let n = (hi - lo) as f64;
        if n < 3.0 {
            return 0.0;
        }
        let s: Vec<f64> = (0..5).map(|q| self.sums[hi][q] - self.sums[lo][q]).collect();
        let sxx = s[2] - s[0] * s[0] / n;
        let sxy = s[3] - s[0] * s[1] / n;
        let syy = s[4] - s[1] * s[1] / n;
        if !(sxx > 0.0) {
            return syy.max(0.0);
        }
        (syy - sxy * sxy / sxx).max(0.0)
    }
}

/// Total cost of a partition given by its candidate breakpoints (first and last included).
#[cfg(test)]
fn partition_cost(cost: &SegmentCost, breaks: &[usize], penalty: f64) -> f64 {
    breaks
        .windows(2)
        .map(|w| cost.sse(w[0], w[1]) + penalty)
        .sum()
}

/// Optimal penalized segmentation of the counting curve of `sfp_events` with
/// breakpoints restricted to `candidates`. The first and last candidates bound the fit.
pub fn segment(sfp_events: &[f64], candidates: &[f64], penalty: f64) -> Result<Vec<CandidateSegment>> {
    if candidates.len() < 2 || sfp_events.len() < 2 {
        return Err(BuscaError::TooFewEvents {
            required: 2,
            actual: candidates.len().min(sfp_events.len()),
        });
    }
    if !(penalty >= 0.0) || !penalty.is_finite() {
        return Err(BuscaError::InvalidParameter(format!("penalty must be >= 0, got {penalty}")));
    }
    let cost = SegmentCost::new(sfp_events, candidates);
    let c = candidates.len();
    let mut best = vec![f64::INFINITY; c];
    let mut from = vec![0usize; c];
    best[0] = 0.0;
    for k in 1..c {
        for j in 0..k {
            let v = best[j] + cost.sse(j, k) + penalty;
            if v < best[k] {
                best[k] = v;
                from[k] = j;
            }
        }
    }
    let mut out = Vec::new();
    let mut k = c - 1;
    while k > 0 {
        out.push(CandidateSegment { start: from[k], end: k });
        k = from[k];
    }
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub sfp_count: usize,
    /// SFP events over the Poisson-expected count in the segment.
    pub tau: f64,
    pub is_burst: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstConfig {
    pub replications: usize,
    pub seed: u64,
    pub tau_threshold: f64,
    /// Per-segment penalty; `None` uses the residual-variance default.
    pub penalty: Option<f64>,
    pub max_blocks: usize,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            tau_threshold: DEFAULT_TAU_THRESHOLD,
            penalty: None,
            max_blocks: DEFAULT_MAX_BLOCKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstReport {
    pub labels: LabelAssignment,
    pub segments: Vec<BurstSegment>,
}

/// Residual variance of one line through the whole counting curve, over [`PENALTY_DIVISOR`].
pub fn default_penalty(sfp_events: &[f64]) -> f64 {
    let y: Vec<f64> = (1..=sfp_events.len()).map(|i| i as f64).collect();
    linear_fit(sfp_events, &y)
        .map(|f| f.sse / sfp_events.len() as f64 / PENALTY_DIVISOR)
        .unwrap_or(0.0)
}

/// Builds window-covering segments from breakpoint times and scores them.
fn score_segments(
    series: &EventSeries,
    sfp_events: &[f64],
    inner_breaks: &[f64],
    lambda_p: f64,
    tau_threshold: f64,
) -> Vec<BurstSegment> {
    let mut bounds = vec![series.window_start()];
    bounds.extend(inner_breaks.iter().copied().filter(|&t| t > series.window_start() && t < series.window_end()));
    bounds.push(series.window_end());
    bounds
        .windows(2)
        .map(|w| {
            let count = sfp_events.partition_point(|&t| t <= w[1]) - sfp_events.partition_point(|&t| t <= w[0]);
            let tau = count as f64 / (lambda_p * (w[1] - w[0]));
            BurstSegment {
                t_start: w[0],
                t_end: w[1],
                sfp_count: count,
                tau,
                is_burst: tau >= tau_threshold,
            }
        })
        .collect()
}

/// Segments the SFP-labelled events of `series` and scores each segment.
pub fn bursts_from_labels(
    series: &EventSeries,
    labels: LabelAssignment,
    lambda_p: f64,
    config: &BurstConfig,
) -> Result<BurstReport> {
    if !(lambda_p > 0.0) || !lambda_p.is_finite() {
        return Err(BuscaError::InvalidParameter("burst power needs lambda_p > 0".into()));
    }
    if labels.labels.len() != series.len() {
        return Err(BuscaError::InvalidParameter("one label per event is required".into()));
    }
    let sfp = labels.select(series.timestamps(), Label::Sfp);
    let inner: Vec<f64> = if sfp.len() < 2 {
        Vec::new()
    } else {
        let candidates = reduce_breakpoints(&sfp, config.max_blocks)?;
        let penalty = config.penalty.unwrap_or_else(|| default_penalty(&sfp));
        let segs = segment(&sfp, &candidates, penalty)?;
        segs.iter().skip(1).map(|s| candidates[s.start]).collect()
    };
    let segments = score_segments(series, &sfp, &inner, lambda_p, config.tau_threshold);
    Ok(BurstReport { labels, segments })
}

/// Disentangles the series, then runs [`bursts_from_labels`] with the fitted `lambda_p`.
pub fn detect_bursts(series: &EventSeries, fit: &MixtureFit, config: &BurstConfig) -> Result<BurstReport> {
    if !(fit.params.lambda_p > 0.0) {
        return Err(BuscaError::InvalidParameter("burst power needs lambda_p > 0".into()));
    }
    let labels = disentangle(series, fit, config.replications, config.seed)?;
    bursts_from_labels(series, labels, fit.params.lambda_p, config)
}
