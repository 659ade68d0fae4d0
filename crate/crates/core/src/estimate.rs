//! EM estimation of `(lambda_p, mu)` and the pseudo-event deletion estimator of `mu`.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};
use crate::likelihood::{estep, expected_loglik, mixture_loglik, DEFAULT_TRUNCATION_DEPTH};
use crate::model::{burstiness_scale, MixtureFit, MixtureParams};
use crate::optim::{golden_max, golden_max_log};
use crate::series::EventSeries;
use crate::simulate::{poisson_times, seeded_rng};
use crate::stats::median;

/// Golden-section iterations per coordinate.
const LINE_SEARCH_ITERATIONS: usize = 30;
/// Coordinate sweeps per M-step.
const SWEEPS_PER_MSTEP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Relative change in `(lambda_p, mu)` below which EM stops.
    pub convergence_tol: f64,
    pub refine_mu: bool,
    pub refine_replications: usize,
    pub seed: u64,
    pub truncation_depth: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            convergence_tol: 1e-4,
            refine_mu: true,
            refine_replications: 30,
            seed: 0,
            truncation_depth: DEFAULT_TRUNCATION_DEPTH,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(BuscaError::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(BuscaError::InvalidParameter("convergence_tol must be > 0".into()));
        }
        if self.truncation_depth < 1 {
            return Err(BuscaError::InvalidParameter("truncation_depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Search box for the M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBounds {
    pub lambda_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl SearchBounds {
    /// `lambda_p` in `[0, n/(t_n - a)]`, `mu` in `[(b-a)/(10 n), t_n - a]`.
    pub fn for_series(series: &EventSeries) -> Self {
        let n = series.len() as f64;
        let span = series.last() - series.window_start();
        let mu_min = series.duration() / (10.0 * n);
        Self {
            lambda_max: n / span,
            mu_min: mu_min.min(span),
            mu_max: span,
        }
    }
}

fn relative_change(old: f64, new: f64, scale: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-6 * scale)
}

/// Mixture objective used by the M-step; `-inf` outside the parameter space.
fn objective(series: &EventSeries, lambda: f64, mu: f64, depth: usize) -> f64 {
    MixtureParams::new(lambda, mu)
        .and_then(|p| mixture_loglik(series, &p, depth))
        .unwrap_or(f64::NEG_INFINITY)
}

/// One M-step: coordinate ascent on the expected log-likelihood, one golden-section
/// search per coordinate and sweep. The intensity moments are recomputed at every
/// trial point. Never returns a point with a lower objective than `start`.
pub fn mstep(
    series: &EventSeries,
    start: MixtureParams,
    bounds: &SearchBounds,
    truncation_depth: usize,
) -> Result<(MixtureParams, f64)> {
    let (mut lambda, mut mu) = (start.lambda_p, start.mu);
    let mut best = objective(series, lambda, mu, truncation_depth);
    for _ in 0..SWEEPS_PER_MSTEP {
        let (l, v) = golden_max(
            |l| objective(series, l, mu, truncation_depth),
            0.0,
            bounds.lambda_max,
            LINE_SEARCH_ITERATIONS,
        );
        if v > best {
            lambda = l;
            best = v;
        }
        let (m, v) = golden_max_log(
            |m| objective(series, lambda, m, truncation_depth),
            bounds.mu_min,
            bounds.mu_max,
            LINE_SEARCH_ITERATIONS,
        );
        if v > best {
            mu = m.clamp(bounds.mu_min, bounds.mu_max);
            best = v;
        }
    }
    Ok((MixtureParams::new(lambda, mu)?, best))
}

/// Result of the EM loop before any refinement of `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub params: MixtureParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before and after each M-step.
    pub mstep_objectives: Vec<(f64, f64)>,
}

/// Runs EM from the default starting point without refining `mu`.
pub fn run_em(series: &EventSeries, config: &EmConfig) -> Result<EmTrace> {
    config.validate()?;
    series.require_events(2)?;
    let depth = config.truncation_depth;
    let bounds = SearchBounds::for_series(series);
    let mu0 = median(&series.gaps())
        .unwrap_or(bounds.mu_max)
        .clamp(bounds.mu_min, bounds.mu_max);
    let mut params = MixtureParams::new(0.5 * series.len() as f64 / series.duration(), mu0)?;

    let mut converged = false;
    let mut iterations = 0;
    let mut mstep_objectives = Vec::new();
    while iterations < config.max_iterations {
        iterations += 1;
        let state = estep(series, &params, depth)?;
        let before = expected_loglik(series, &params, &state).unwrap_or(f64::NEG_INFINITY);
        let (next, after) = mstep(series, params, &bounds, depth)?;
        mstep_objectives.push((before, after));
        let change = relative_change(params.lambda_p, next.lambda_p, bounds.lambda_max)
            .max(relative_change(params.mu, next.mu, bounds.mu_max));
        params = next;
        if change < config.convergence_tol {
            converged = true;
            break;
        }
    }
    let log_likelihood = mixture_loglik(series, &params, depth)?;
    Ok(EmTrace {
        params,
        log_likelihood,
        iterations,
        converged,
        mstep_objectives,
    })
}

/// Fits the mixture by EM and, when configured, replaces `mu` with the
/// pseudo-event deletion estimate.
pub fn fit_em(series: &EventSeries, config: &EmConfig) -> Result<MixtureFit> {
    let trace = run_em(series, config)?;
    let mut params = trace.params;
    let mut mu_refined = false;
    if config.refine_mu && params.lambda_p > 0.0 {
        if let Ok(mu) = refine_mu(series, params.lambda_p, config.refine_replications, config.seed) {
            params = MixtureParams::new(params.lambda_p, mu)?;
            mu_refined = true;
        }
    }
    Ok(MixtureFit {
        params,
        psi: burstiness_scale(params.lambda_p, series.duration(), series.len()),
        log_likelihood: trace.log_likelihood,
        mu_em: trace.params.mu,
        em_iterations: trace.iterations,
        converged: trace.converged,
        mu_refined,
    })
}

/// One deletion pass: pseudo-events from a Poisson process with rate `lambda`
/// on `(a, t_n)` each remove the nearest surviving event closer than `2/lambda`.
///
/// Returns a mask where `true` marks a deleted event. Ties go to the earlier event.
pub fn pseudo_event_deletion<R: Rng + ?Sized>(series: &EventSeries, lambda: f64, rng: &mut R) -> Vec<bool> {
    let t = series.timestamps();
    let mut deleted = vec![false; t.len()];
    if !(lambda > 0.0) || !lambda.is_finite() {
        return deleted;
    }
    let radius = 2.0 / lambda;
    let pseudo = poisson_times(rng, lambda, series.window_start(), series.last());
    let mut alive: BTreeSet<usize> = (0..t.len()).collect();
    for u in pseudo {
        let pos = t.partition_point(|&x| x < u);
        let right = alive.range(pos..).next().copied();
        let left = alive.range(..pos).next_back().copied();
        let pick = match (left, right) {
            (Some(l), Some(r)) => {
                if u - t[l] <= t[r] - u {
                    Some(l)
                } else {
                    Some(r)
                }
            }
            (Some(l), None) => Some(l),
            (None, Some(r)) => Some(r),
            (None, None) => None,
        };
        if let Some(k) = pick {
            if (t[k] - u).abs() < radius {
                alive.remove(&k);
                deleted[k] = true;
            }
        }
    }
    deleted
}

/// Median gap of the events that survive one deletion pass, or `None` with fewer than 3 survivors.
fn survivor_median_gap(series: &EventSeries, deleted: &[bool]) -> Option<f64> {
    let survivors: Vec<f64> = series
        .timestamps()
        .iter()
        .zip(deleted)
        .filter(|(_, &d)| !d)
        .map(|(&t, _)| t)
        .collect();
    if survivors.len() < 3 {
        return None;
    }
    let gaps: Vec<f64> = survivors.windows(2).map(|w| w[1] - w[0]).collect();
    median(&gaps)
}

/// Bias-corrected estimate of `mu`: the mean over replications of the median gap
/// among events left after pseudo-Poisson deletion.
pub fn refine_mu(series: &EventSeries, lambda_hat: f64, replications: usize, seed: u64) -> Result<f64> {
    if !(lambda_hat >= 0.0) || !lambda_hat.is_finite() {
        return Err(BuscaError::InvalidParameter(format!(
            "lambda_hat must be finite and >= 0, got {lambda_hat}"
        )));
    }
    if replications == 0 {
        return Err(BuscaError::InvalidParameter("replications must be >= 1".into()));
    }
    let medians: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .filter_map(|rep| {
            let mut rng = seeded_rng(seed, 1000 + rep);
            let deleted = pseudo_event_deletion(series, lambda_hat, &mut rng);
            survivor_median_gap(series, &deleted)
        })
        .collect();
    if medians.is_empty() {
        return Err(BuscaError::RefinementFailed);
    }
    Ok(medians.iter().sum::<f64>() / medians.len() as f64)
}

/// Symmetric relative error: `est/truth - 1` above parity, `1 - truth/est` below.
pub fn delta_metric(est: f64, truth: f64) -> Result<f64> {
    if !(est > 0.0) || !(truth > 0.0) {
        return Err(BuscaError::InvalidParameter(format!(
            "delta needs positive inputs, got est={est}, truth={truth}"
        )));
    }
    let ratio = est / truth;
    Ok(if ratio >= 1.0 { ratio - 1.0 } else { 1.0 - truth / est })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::validate_series;
    use crate::simulate::{simulate_mixture, simulate_poisson};
    use proptest::prelude::*;

    #[test]
    fn delta_examples() {
        assert!((delta_metric(1.5, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((delta_metric(1.0, 1.5).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(delta_metric(2.0, 2.0).unwrap(), 0.0);
        assert!(delta_metric(0.0, 1.0).is_err());
        assert!(delta_metric(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn delta_is_antisymmetric(x in 1e-3f64..1e3, y in 1e-3f64..1e3) {
            let d = delta_metric(x, y).unwrap() + delta_metric(y, x).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(EmConfig::default().validate().is_ok());
        let bad = EmConfig { max_iterations: 0, ..EmConfig::default() };
        assert!(bad.validate().is_err());
        let bad = EmConfig { convergence_tol: 0.0, ..EmConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fit_requires_two_events() {
        let s = validate_series(&[1.0], Some(0.0), Some(2.0)).unwrap();
        assert!(matches!(fit_em(&s, &EmConfig::default()), Err(BuscaError::TooFewEvents { .. })));
    }

    #[test]
    fn estimates_stay_in_bounds_and_msteps_ascend() {
        for seed in 0..5 {
            let p = MixtureParams::new(0.5, 3.0).unwrap();
            let sim = simulate_mixture(&p, 0.0, 400.0, seed).unwrap();
            let bounds = SearchBounds::for_series(&sim.series);
            let trace = run_em(&sim.series, &EmConfig::default()).unwrap();
            assert!(trace.params.lambda_p >= 0.0 && trace.params.lambda_p <= bounds.lambda_max);
            assert!(trace.params.mu >= bounds.mu_min && trace.params.mu <= bounds.mu_max);
            for (before, after) in &trace.mstep_objectives {
                assert!(after - before >= -1e-8, "M-step decreased: {before} -> {after}");
            }
            assert!(trace.iterations <= 100);
        }
    }

    #[test]
    fn pure_poisson_input() {
        let s = simulate_poisson(1.0, 0.0, 1000.0, 3).unwrap();
        let cfg = EmConfig { refine_mu: false, ..EmConfig::default() };
        let fit = fit_em(&s, &cfg).unwrap();
        let mle = s.len() as f64 / s.duration();
        assert!((fit.params.lambda_p - mle).abs() / mle < 0.1, "lambda {}", fit.params.lambda_p);
        // The self-feeding part is pushed far beyond the typical gap.
        assert!(fit.params.mu > 20.0 / mle, "mu {}", fit.params.mu);
        assert!(fit.psi < 10.0);
    }

    #[test]
    fn refine_without_pseudo_events_is_plain_median() {
        let s = validate_series(&[1.0, 2.0, 4.0, 7.0, 11.0], Some(0.0), Some(12.0)).unwrap();
        assert_eq!(refine_mu(&s, 0.0, 5, 1).unwrap(), 2.5);
    }

    #[test]
    fn refine_is_deterministic() {
        let p = MixtureParams::new(0.5, 2.0).unwrap();
        let sim = simulate_mixture(&p, 0.0, 500.0, 4).unwrap();
        let a = refine_mu(&sim.series, 0.5, 30, 77).unwrap();
        let b = refine_mu(&sim.series, 0.5, 30, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refine_fails_when_everything_is_deleted() {
        let s = validate_series(&[1.0, 1.1, 1.2], Some(0.0), Some(1000.0)).unwrap();
        // A huge pseudo rate removes nearly everything, leaving < 3 survivors.
        assert_eq!(refine_mu(&s, 1e4, 5, 1), Err(BuscaError::RefinementFailed));
    }

    #[test]
    fn deletion_respects_radius_and_ties() {
        let s = validate_series(&[1.0, 3.0], Some(0.0), Some(4.0)).unwrap();
        let mut rng = seeded_rng(0, 0);
        let deleted = pseudo_event_deletion(&s, 1e-9, &mut rng);
        assert_eq!(deleted, vec![false, false]);
    }

    #[test]
    fn refine_variance_shrinks_with_replications() {
        let p = MixtureParams::new(0.5, 2.0).unwrap();
        let sim = simulate_mixture(&p, 0.0, 1000.0, 12).unwrap();
        let spread = |reps: usize| {
            let v: Vec<f64> = (0..10).map(|s| refine_mu(&sim.series, 0.5, reps, s).unwrap()).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (v4, v40) = (spread(4), spread(40));
        let ratio = v4 / v40;
        assert!((10.0 / 3.0..=30.0).contains(&ratio), "variance ratio {ratio}");
    }
}
