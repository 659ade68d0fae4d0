//! Conditional intensities, pure-model log-likelihoods and the E-step.
//!
//! Conventions shared with the simulator: the self-feeding intensity just before
//! event `i` is `1/(mu/e + g)` where `g` is the gap between the two most recent
//! self-feeding events before `t_i`. While fewer than two such events exist the
//! intensity is the fallback `1/(mu/e + mu)`. The first event is taken to be
//! self-feeding.
//!
//! The intensity is a step function: the value at event `i` holds on `(t_{i-1}, t_i]`
//! (with `t_{-1} = a`), and the value after the last event holds on `(t_n, b]`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};
use crate::model::MixtureParams;
use crate::series::EventSeries;

pub const DEFAULT_TRUNCATION_DEPTH: usize = 10;

/// Intensities below this are treated as underflow.
pub const INTENSITY_FLOOR: f64 = 1e-300;

/// SFP conditional intensity `1/(mu/e + last_gap)`.
pub fn sfp_intensity(mu: f64, last_gap: f64) -> f64 {
    1.0 / (mu / E + last_gap)
}

fn checked_ln(x: f64, index: usize) -> Result<f64> {
    if x < INTENSITY_FLOOR || x.is_nan() {
        return Err(BuscaError::NumericalUnderflow { index });
    }
    Ok(x.ln())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(BuscaError::InvalidParameter(format!(
            "mu must be positive and finite, got {mu}"
        )));
    }
    Ok(())
}

/// Area under a step function holding `levels[i]` on `(t_{i-1}, t_i]` and
/// `levels[n]` on `(t_n, b]`.
pub(crate) fn step_integral(series: &EventSeries, levels: &[f64]) -> f64 {
    let t = series.timestamps();
    let n = t.len();
    debug_assert_eq!(levels.len(), n + 1);
    let mut area = levels[0] * (t[0] - series.window_start());
    for i in 1..n {
        area += levels[i] * (t[i] - t[i - 1]);
    }
    area + levels[n] * (series.window_end() - t[n - 1])
}

/// Pure Poisson maximum likelihood: `(lambda_hat, loglik)` with `lambda_hat = n/(b-a)`.
pub fn loglik_pure_poisson(series: &EventSeries) -> Result<(f64, f64)> {
    series.require_events(1)?;
    let n = series.len() as f64;
    let lambda = n / series.duration();
    Ok((lambda, n * lambda.ln() - n))
}

/// Log-likelihood of a homogeneous Poisson process with rate `lambda_p`.
pub fn loglik_poisson_at(series: &EventSeries, lambda_p: f64) -> Result<f64> {
    series.require_events(1)?;
    let n = series.len() as f64;
    Ok(n * checked_ln(lambda_p, 0)? - lambda_p * series.duration())
}

/// SFP intensities when every event is self-feeding: one value per event plus
/// the value after the last event.
pub fn sfp_path_intensities(series: &EventSeries, mu: f64) -> Vec<f64> {
    let t = series.timestamps();
    let n = t.len();
    let fallback = sfp_intensity(mu, mu);
    (0..=n)
        .map(|i| {
            if i < 2 {
                fallback
            } else {
                sfp_intensity(mu, t[i - 1] - t[i - 2])
            }
        })
        .collect()
}

/// Exact log-likelihood with every event labelled self-feeding.
pub fn loglik_pure_sfp(series: &EventSeries, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    series.require_events(1)?;
    let levels = sfp_path_intensities(series, mu);
    let mut sum = 0.0;
    for (i, &x) in levels[..series.len()].iter().enumerate() {
        sum += checked_ln(x, i)?;
    }
    Ok(sum - step_integral(series, &levels))
}

/// First and second moments of the SFP intensity at each event, marginalized over
/// the hidden labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStepState {
    mean: Vec<f64>,
    second: Vec<f64>,
    sfp_prob: Vec<f64>,
    truncation_depth: usize,
}

impl EStepState {
    /// `a_i = E[lambda_s(t_i)]`, one per event.
    pub fn mean(&self) -> &[f64] {
        &self.mean[..self.sfp_prob.len()]
    }

    /// `b_i = E[lambda_s(t_i)^2]`, one per event.
    pub fn second_moment(&self) -> &[f64] {
        &self.second[..self.sfp_prob.len()]
    }

    /// Expected SFP intensity on `(t_n, b]`.
    pub fn tail_mean(&self) -> f64 {
        self.mean[self.sfp_prob.len()]
    }

    /// Approximate posterior probability that each event is self-feeding.
    pub fn sfp_prob(&self) -> &[f64] {
        &self.sfp_prob
    }

    pub fn truncation_depth(&self) -> usize {
        self.truncation_depth
    }

    /// Same state with the second moments replaced by `a_i^2` (zero variance).
    pub fn without_variance(&self) -> Self {
        let mut out = self.clone();
        out.second = out.mean.iter().map(|a| a * a).collect();
        out
    }
}

/// Forward recursion over events.
///
/// `prob(i, a_i)` yields the self-feeding probability of event `i` (`i >= 1`);
/// event 0 is self-feeding with probability one.
fn propagate<F>(series: &EventSeries, mu: f64, depth: usize, mut prob: F) -> EStepState
where
    F: FnMut(usize, f64) -> f64,
{
    let t = series.timestamps();
    let n = t.len();
    let base = mu / E;
    let fallback = 1.0 / (base + mu);
    let depth = depth.max(1);

    let mut mean = Vec::with_capacity(n + 1);
    let mut second = Vec::with_capacity(n + 1);
    let mut p = Vec::with_capacity(n);
    mean.push(fallback);
    second.push(fallback * fallback);
    p.push(1.0);

    for i in 1..=n {
        let last = i - 1;
        let (s1, s2) = if last == 0 {
            (fallback, fallback * fallback)
        } else {
            // Backward sum over the most recent self-feeding event before t_last.
            let kmin = last.saturating_sub(depth);
            let (mut s1, mut s2, mut carry) = (0.0, 0.0, 1.0);
            for k in (kmin..last).rev() {
                let w = p[k] * carry;
                let g = 1.0 / (base + t[last] - t[k]);
                s1 += w * g;
                s2 += w * g * g;
                carry *= 1.0 - p[k];
            }
            if carry > 0.0 && kmin > 0 {
                // Truncated tail: lump the remaining mass on the next older event,
                // an upper bound for every term beyond the depth.
                let g = 1.0 / (base + t[last] - t[kmin - 1]);
                s1 += carry * g;
                s2 += carry * g * g;
            }
            (s1, s2)
        };
        let pl = p[last];
        let a = (1.0 - pl) * mean[last] + pl * s1;
        let b = (1.0 - pl) * second[last] + pl * s2;
        mean.push(a);
        second.push(b.max(a * a));
        if i < n {
            p.push(prob(i, a).clamp(0.0, 1.0));
        }
    }

    EStepState {
        mean,
        second,
        sfp_prob: p,
        truncation_depth: depth,
    }
}

/// E-step: expected SFP intensity moments under `params` with the label
/// probabilities `a_i / (a_i + lambda_p)`.
pub fn estep(series: &EventSeries, params: &MixtureParams, truncation_depth: usize) -> Result<EStepState> {
    check_mu(params.mu)?;
    if !(params.lambda_p >= 0.0) || !params.lambda_p.is_finite() {
        return Err(BuscaError::DegenerateParams);
    }
    series.require_events(1)?;
    let lambda = params.lambda_p;
    Ok(propagate(series, params.mu, truncation_depth, |_, a| a / (a + lambda)))
}

/// Second-order approximation of the expected mixture log-likelihood.
pub fn expected_loglik(series: &EventSeries, params: &MixtureParams, state: &EStepState) -> Result<f64> {
    let lambda = params.lambda_p;
    let n = series.len();
    if state.mean.len() != n + 1 {
        return Err(BuscaError::InvalidParameter(
            "E-step state does not match the series length".into(),
        ));
    }
    let mut sum = 0.0;
    for i in 0..n {
        let a = state.mean[i];
        let total = lambda + a;
        let var = (state.second[i] - a * a).max(0.0);
        sum += checked_ln(total, i)? - var / (2.0 * total * total);
    }
    Ok(sum - step_integral(series, &state.mean) - lambda * series.duration())
}

/// Mixture objective at `params`: E-step followed by the expected log-likelihood.
pub fn mixture_loglik(series: &EventSeries, params: &MixtureParams, truncation_depth: usize) -> Result<f64> {
    let state = estep(series, params, truncation_depth)?;
    expected_loglik(series, params, &state)
}
