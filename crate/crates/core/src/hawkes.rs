//! Exponential-kernel Hawkes baseline and the AIC comparison against the mixture.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};
use crate::model::MixtureFit;
use crate::optim::{golden_max, golden_max_log};
use crate::series::EventSeries;
use crate::simulate::seeded_rng;

const ALPHA_MAX: f64 = 0.999;
const LINE_SEARCH_ITERATIONS: usize = 40;
const MAX_SWEEPS: usize = 60;
const SWEEP_TOL: f64 = 1e-9;

/// Background rate `lambda_p` plus the kernel `K(x) = alpha * beta * exp(-beta x)`.
///
/// `alpha` is the expected number of offspring per event and must stay below one
/// for a stationary process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub lambda_p: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl HawkesParams {
    pub fn new(lambda_p: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("lambda_p", lambda_p), ("alpha", alpha), ("beta", beta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(BuscaError::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self { lambda_p, alpha, beta })
    }

    pub fn is_stationary(&self) -> bool {
        self.alpha < 1.0
    }
}

/// Exact log-likelihood on the series window, `O(n)` via the exponential recursion.
pub fn hawkes_loglik(series: &EventSeries, params: &HawkesParams) -> f64 {
    Kernel::new(series, params.beta).loglik(series, params.lambda_p, params.alpha)
}

/// The parts of the likelihood that depend on `beta` alone.
struct Kernel {
    beta: f64,
    /// `sum_{j<i} exp(-beta (t_i - t_j))` at each event.
    excitation: Vec<f64>,
    /// `sum_i (1 - exp(-beta (b - t_i)))`.
    mass: f64,
}

impl Kernel {
    fn new(series: &EventSeries, beta: f64) -> Self {
        let t = series.timestamps();
        let b = series.window_end();
        let mut excitation = Vec::with_capacity(t.len());
        let mut e = 0.0;
        for i in 0..t.len() {
            if i > 0 {
                e = (-beta * (t[i] - t[i - 1])).exp() * (1.0 + e);
            }
            excitation.push(e);
        }
        let mass = t.iter().map(|&ti| 1.0 - (-beta * (b - ti)).exp()).sum();
        Self { beta, excitation, mass }
    }

    fn loglik(&self, series: &EventSeries, lambda_p: f64, alpha: f64) -> f64 {
        let ab = alpha * self.beta;
        let sum: f64 = self.excitation.iter().map(|&e| (lambda_p + ab * e).ln()).sum();
        sum - lambda_p * series.duration() - alpha * self.mass
    }
}

/// Simulates a Hawkes process on `(start, end]` by Ogata thinning.
pub fn simulate_hawkes(params: &HawkesParams, start: f64, end: f64, seed: u64) -> Result<EventSeries> {
    if !(start < end) || !start.is_finite() || !end.is_finite() {
        return Err(BuscaError::InvalidWindow { start, end });
    }
    if !(params.lambda_p > 0.0) {
        return Err(BuscaError::InvalidParameter("lambda_p must be > 0 to simulate".into()));
    }
    let HawkesParams { lambda_p, alpha, beta } = *params;
    let mut rng = seeded_rng(seed, 3);
    let mut events = Vec::new();
    // Excitation just after the last accepted event, and that event's time.
    let (mut excitation, mut anchor) = (0.0, start);
    let mut t = start;
    loop {
        let bound = lambda_p + alpha * beta * excitation * (-beta * (t - anchor)).exp();
        t += -(1.0 - rng.random::<f64>()).ln() / bound;
        if t > end {
            break;
        }
        let current = excitation * (-beta * (t - anchor)).exp();
        if rng.random::<f64>() * bound <= lambda_p + alpha * beta * current {
            events.push(t);
            excitation = current + 1.0;
            anchor = t;
        }
    }
    if events.is_empty() {
        return Err(BuscaError::EmptySeries);
    }
    EventSeries::new("hawkes", &events, Some(start), Some(end))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesFit {
    pub params: HawkesParams,
    pub log_likelihood: f64,
    /// `2 * 3 - 2 * log_likelihood`.
    pub aic: f64,
}

fn coordinate_ascent(series: &EventSeries, start: HawkesParams, beta_range: (f64, f64)) -> (HawkesParams, f64) {
    let lambda_max = 2.0 * series.len() as f64 / series.duration();
    let mut p = start;
    let mut kernel = Kernel::new(series, p.beta);
    let mut best = kernel.loglik(series, p.lambda_p, p.alpha);
    for _ in 0..MAX_SWEEPS {
        let before = best;
        let (x, v) = golden_max(
            |x| kernel.loglik(series, x, p.alpha),
            0.0,
            lambda_max,
            LINE_SEARCH_ITERATIONS,
        );
        if v > best {
            p.lambda_p = x;
            best = v;
        }
        let (x, v) = golden_max(
            |x| kernel.loglik(series, p.lambda_p, x),
            0.0,
            ALPHA_MAX,
            LINE_SEARCH_ITERATIONS,
        );
        if v > best {
            p.alpha = x;
            best = v;
        }
        let (x, v) = golden_max_log(
            |x| hawkes_loglik(series, &HawkesParams { beta: x, ..p }),
            beta_range.0,
            beta_range.1,
            LINE_SEARCH_ITERATIONS,
        );
        if v > best {
            p.beta = x;
            best = v;
            kernel = Kernel::new(series, x);
        }
        if (best - before).abs() <= SWEEP_TOL * best.abs().max(1.0) {
            break;
        }
    }
    (p, best)
}

/// Maximum likelihood fit by multi-start coordinate ascent.
pub fn fit_hawkes(series: &EventSeries) -> Result<HawkesFit> {
    series.require_events(3)?;
    let n = series.len() as f64;
    let mean_gap = (series.last() - series.first()) / (n - 1.0);
    let beta_range = (1e-3 / mean_gap, 1e3 / mean_gap);
    let base = n / series.duration();
    let starts: Vec<HawkesParams> = [0.1, 0.5, 0.9]
        .iter()
        .flat_map(|&alpha| {
            [1.0, 10.0].map(|k| HawkesParams {
                lambda_p: (1.0 - alpha) * base,
                alpha,
                beta: k / mean_gap,
            })
        })
        .collect();
    let (params, log_likelihood) = starts
        .par_iter()
        .map(|&s| coordinate_ascent(series, s, beta_range))
        .filter(|(_, ll)| ll.is_finite())
        .reduce_with(|a, b| if b.1 > a.1 { b } else { a })
        .ok_or_else(|| BuscaError::FitFailed("no start reached a finite likelihood".into()))?;
    Ok(HawkesFit {
        params,
        log_likelihood,
        aic: 6.0 - 2.0 * log_likelihood,
    })
}

/// `2 * 2 - 2 * log_likelihood` for the two-parameter mixture.
pub fn busca_aic(fit: &MixtureFit) -> f64 {
    4.0 - 2.0 * fit.log_likelihood
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Winner {
    Busca,
    Hawkes,
}

impl std::fmt::Display for Winner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Winner::Busca => "BUSCA",
            Winner::Hawkes => "HAWKES",
        })
    }
}

/// Lower AIC wins; ties go to the mixture.
pub fn compare_aic(busca_fit: &MixtureFit, hawkes_fit: &HawkesFit) -> Winner {
    if busca_aic(busca_fit) <= hawkes_fit.aic {
        Winner::Busca
    } else {
        Winner::Hawkes
    }
}
