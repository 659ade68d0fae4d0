//! Seeded simulators for the Poisson, self-feeding and mixture processes.
//!
//! The self-feeding process (SFP) is a Markov chain on inter-event gaps: given the
//! previous gap `g`, the next gap is exponential with mean `mu/e + g`. Before two
//! events have been observed there is no gap; the chain then uses an initial gap
//! state (the median `mu` by default) for the first two waiting times, which is the
//! same convention the likelihood code uses.

use std::f64::consts::E;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};
use crate::model::{Label, MixtureParams};
use crate::series::{validate_series, EventSeries};
use crate::stats::median;

/// Deterministic RNG for `(seed, stream)`. Distinct streams are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e * mean
}

fn check_window(start: f64, end: f64) -> Result<()> {
    if !start.is_finite() || !end.is_finite() || start >= end {
        return Err(BuscaError::InvalidWindow { start, end });
    }
    Ok(())
}

pub(crate) fn poisson_times<R: Rng + ?Sized>(rng: &mut R, rate: f64, start: f64, end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(rate > 0.0) {
        return out;
    }
    let mut t = start;
    loop {
        t += exponential(rng, 1.0 / rate);
        if t > end {
            break;
        }
        if t > start {
            out.push(t);
        }
    }
    out
}

pub(crate) fn sfp_times<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    start: f64,
    end: f64,
    first_gap: f64,
) -> Vec<f64> {
    let base = mu / E;
    let mut out = Vec::new();
    let mut t = start;
    let mut gap_state = first_gap;
    loop {
        let gap = exponential(rng, base + gap_state);
        t += gap;
        if t > end {
            break;
        }
        if t > start {
            out.push(t);
        }
        if out.len() >= 2 {
            gap_state = gap;
        }
    }
    out
}

/// Homogeneous Poisson process with rate `lambda_p` on `(start, end]`.
pub fn simulate_poisson(lambda_p: f64, start: f64, end: f64, seed: u64) -> Result<EventSeries> {
    if !(lambda_p > 0.0) || !lambda_p.is_finite() {
        return Err(BuscaError::InvalidParameter(format!(
            "Poisson rate must be positive, got {lambda_p}"
        )));
    }
    check_window(start, end)?;
    let mut rng = seeded_rng(seed, 0);
    let times = poisson_times(&mut rng, lambda_p, start, end);
    validate_series(&times, Some(start), Some(end))
}

/// Self-feeding process with median gap `mu` on `(start, end]`.
///
/// `first_gap` is the gap state used before two events exist; it defaults to `mu`.
pub fn simulate_sfp(
    mu: f64,
    start: f64,
    end: f64,
    seed: u64,
    first_gap: Option<f64>,
) -> Result<EventSeries> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(BuscaError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    check_window(start, end)?;
    let first_gap = first_gap.unwrap_or(mu);
    if !(first_gap >= 0.0) {
        return Err(BuscaError::InvalidParameter(format!(
            "first gap must be >= 0, got {first_gap}"
        )));
    }
    let mut rng = seeded_rng(seed, 1);
    let times = sfp_times(&mut rng, mu, start, end, first_gap);
    validate_series(&times, Some(start), Some(end))
}

/// `count` consecutive gaps of the self-feeding chain, starting from the gap state `first_gap`.
pub fn sfp_gap_chain(mu: f64, first_gap: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(BuscaError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let mut rng = seeded_rng(seed, 2);
    let base = mu / E;
    let mut prev = first_gap;
    Ok((0..count)
        .map(|_| {
            prev = exponential(&mut rng, base + prev);
            prev
        })
        .collect())
}

/// A simulated mixture with its ground-truth source labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMixture {
    pub series: EventSeries,
    pub labels: Vec<Label>,
}

impl SimulatedMixture {
    /// Fraction of events (in percent) generated by the self-feeding component.
    pub fn sfp_percent(&self) -> f64 {
        let sfp = self.labels.iter().filter(|&&l| l == Label::Sfp).count();
        100.0 * sfp as f64 / self.labels.len() as f64
    }
}

/// Superposition of independent Poisson and self-feeding realizations.
pub fn simulate_mixture(params: &MixtureParams, start: f64, end: f64, seed: u64) -> Result<SimulatedMixture> {
    let params = MixtureParams::new(params.lambda_p, params.mu)?;
    check_window(start, end)?;
    let mut pp_rng = seeded_rng(seed, 0);
    let mut sfp_rng = seeded_rng(seed, 1);
    let pp = poisson_times(&mut pp_rng, params.lambda_p, start, end);
    let sfp = if params.has_sfp() {
        sfp_times(&mut sfp_rng, params.mu, start, end, params.mu)
    } else {
        Vec::new()
    };
    merge_labelled(&pp, &sfp, start, end)
}

pub(crate) fn merge_labelled(pp: &[f64], sfp: &[f64], start: f64, end: f64) -> Result<SimulatedMixture> {
    let mut tagged: Vec<(f64, Label)> = pp
        .iter()
        .map(|&t| (t, Label::Poisson))
        .chain(sfp.iter().map(|&t| (t, Label::Sfp)))
        .collect();
    tagged.sort_by(|x, y| x.0.total_cmp(&y.0));
    let times: Vec<f64> = tagged.iter().map(|x| x.0).collect();
    let series = validate_series(&times, Some(start), Some(end))?;
    Ok(SimulatedMixture {
        series,
        labels: tagged.into_iter().map(|x| x.1).collect(),
    })
}

/// Number of seeds used per probe when calibrating `mu`.
pub const CALIBRATION_SEEDS: u64 = 50;

fn median_sfp_count(mu: f64, start: f64, end: f64) -> f64 {
    let counts: Vec<f64> = (0..CALIBRATION_SEEDS)
        .map(|s| {
            let mut rng = seeded_rng(s, 11);
            sfp_times(&mut rng, mu, start, end, mu).len() as f64
        })
        .collect();
    median(&counts).unwrap_or(0.0)
}

/// Mixture parameters whose expected composition is `psi_target` percent
/// self-feeding events out of `n_target` events on `(start, end]`.
///
/// `lambda_p` follows in closed form. `mu` is found by bisection on `ln mu` so that
/// the median self-feeding count over a fixed set of seeds hits the target.
pub fn pick_params_for_psi(psi_target: f64, n_target: usize, start: f64, end: f64) -> Result<MixtureParams> {
    if !(0.0..=100.0).contains(&psi_target) {
        return Err(BuscaError::InvalidParameter(format!(
            "psi must lie in [0, 100], got {psi_target}"
        )));
    }
    if n_target < 10 {
        return Err(BuscaError::InvalidParameter(format!(
            "n_target must be >= 10, got {n_target}"
        )));
    }
    check_window(start, end)?;
    let duration = end - start;
    let lambda_p = (1.0 - psi_target / 100.0) * n_target as f64 / duration;
    let sfp_target = psi_target / 100.0 * n_target as f64;
    if sfp_target < 0.5 {
        return MixtureParams::pure_poisson(lambda_p);
    }

    // Count is nonincreasing in mu: with common random numbers every gap scales with mu.
    let mut lo = duration / sfp_target;
    let mut hi = lo;
    let mut expansions = 0;
    while median_sfp_count(lo, start, end) < sfp_target {
        lo /= 2.0;
        expansions += 1;
        if expansions > 80 {
            return Err(BuscaError::UnreachableTarget(format!("no mu yields {sfp_target} events")));
        }
    }
    expansions = 0;
    while median_sfp_count(hi, start, end) > sfp_target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 80 {
            return Err(BuscaError::UnreachableTarget(format!("no mu yields {sfp_target} events")));
        }
    }
    for _ in 0..50 {
        let mid = (lo.ln() * 0.5 + hi.ln() * 0.5).exp();
        if median_sfp_count(mid, start, end) >= sfp_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-9 {
            break;
        }
    }
    MixtureParams::new(lambda_p, (lo.ln() * 0.5 + hi.ln() * 0.5).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{correlation, mean};

    #[test]
    fn poisson_count_within_four_sigma() {
        for seed in 0..20 {
            let s = simulate_poisson(1.0, 0.0, 100.0, seed).unwrap();
            assert!((60..=140).contains(&s.len()), "seed {seed}: {}", s.len());
        }
    }

    #[test]
    fn poisson_rejects_bad_rate() {
        assert!(simulate_poisson(0.0, 0.0, 100.0, 1).is_err());
        assert!(simulate_poisson(-1.0, 0.0, 100.0, 1).is_err());
    }

    #[test]
    fn poisson_mean_gap() {
        let gaps: Vec<f64> = (0..1000)
            .flat_map(|seed| simulate_poisson(0.5, 0.0, 100.0, seed).unwrap().gaps())
            .collect();
        let m = mean(&gaps).unwrap();
        assert!((m - 2.0).abs() < 0.5, "mean gap {m}");
    }

    #[test]
    fn poisson_disjoint_counts_uncorrelated() {
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for seed in 0..1000 {
            let s = simulate_poisson(1.0, 0.0, 100.0, seed).unwrap();
            left.push(s.count_until(50.0).unwrap() as f64);
            right.push((s.len() - s.count_until(50.0).unwrap()) as f64);
        }
        assert!(correlation(&left, &right).unwrap().abs() < 0.1);
    }

    #[test]
    fn simulators_are_deterministic() {
        let p = MixtureParams::new(0.5, 2.0).unwrap();
        assert_eq!(simulate_mixture(&p, 0.0, 100.0, 9).unwrap(), simulate_mixture(&p, 0.0, 100.0, 9).unwrap());
        assert_eq!(
            simulate_sfp(1.0, 0.0, 100.0, 3, None).unwrap(),
            simulate_sfp(1.0, 0.0, 100.0, 3, None).unwrap()
        );
        assert_ne!(
            simulate_sfp(1.0, 0.0, 100.0, 3, None).unwrap(),
            simulate_sfp(1.0, 0.0, 100.0, 4, None).unwrap()
        );
    }

    #[test]
    fn sfp_zero_previous_gap_mean() {
        // Previous gap 0 and mu = 1: first waiting time has mean 1/e.
        let first: Vec<f64> = (0..20_000)
            .filter_map(|seed| simulate_sfp(1.0, 0.0, 10.0, seed, Some(0.0)).ok())
            .map(|s| s.first())
            .collect();
        let m = mean(&first).unwrap();
        assert!((m - 1.0 / E).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn sfp_realizations_vary_widely() {
        // Same mu, very different early rates: some seeds crawl, others burst.
        let rates: Vec<f64> = (0..200)
            .filter_map(|seed| simulate_sfp(1.0, 0.0, 100.0, seed, None).ok())
            .map(|s| s.count_until(40.0).unwrap() as f64 / 40.0)
            .collect();
        let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().cloned().fold(0.0, f64::max);
        assert!(lo <= 0.5 && hi >= 1.5, "rates span [{lo}, {hi}]");
    }

    #[test]
    fn sfp_gap_law_weighted_regression() {
        // Var[g' | g] = (mu/e + g)^2, so weight by its inverse.
        let mu = 1.0;
        let gaps = sfp_gap_chain(mu, mu, 20_001, 5).unwrap();
        let (x, y) = (&gaps[..20_000], &gaps[1..]);
        let w: Vec<f64> = x.iter().map(|g| (mu / E + g).powi(-2)).collect();
        let fit = crate::stats::weighted_linear_fit(x, y, &w).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.05, "slope {}", fit.slope);
        assert!((fit.intercept / (mu / E) - 1.0).abs() < 0.1, "intercept {}", fit.intercept);
    }

    #[test]
    fn mixture_is_union_of_components() {
        let p = MixtureParams::new(0.75, 3.0).unwrap();
        let sim = simulate_mixture(&p, 0.0, 100.0, 5).unwrap();
        assert_eq!(sim.labels.len(), sim.series.len());
        let mut pp_rng = seeded_rng(5, 0);
        let mut sfp_rng = seeded_rng(5, 1);
        let pp = poisson_times(&mut pp_rng, 0.75, 0.0, 100.0);
        let sfp = sfp_times(&mut sfp_rng, 3.0, 0.0, 100.0, 3.0);
        let from_labels = |l: Label| -> Vec<f64> {
            sim.series
                .timestamps()
                .iter()
                .zip(&sim.labels)
                .filter(|x| *x.1 == l)
                .map(|x| *x.0)
                .collect()
        };
        assert_eq!(from_labels(Label::Poisson), pp);
        assert_eq!(from_labels(Label::Sfp), sfp);
    }

    #[test]
    fn pure_poisson_mixture_has_only_poisson_labels() {
        let p = MixtureParams::pure_poisson(1.0).unwrap();
        let sim = simulate_mixture(&p, 0.0, 100.0, 2).unwrap();
        assert!(sim.labels.iter().all(|&l| l == Label::Poisson));
    }

    #[test]
    fn psi_extremes() {
        let p = pick_params_for_psi(0.0, 100, 0.0, 100.0).unwrap();
        assert_eq!(p.lambda_p, 1.0);
        assert!(p.mu.is_infinite());
        let p = pick_params_for_psi(100.0, 100, 0.0, 100.0).unwrap();
        assert_eq!(p.lambda_p, 0.0);
        assert!(p.mu.is_finite());
        assert!(pick_params_for_psi(120.0, 100, 0.0, 100.0).is_err());
        assert!(pick_params_for_psi(50.0, 5, 0.0, 100.0).is_err());
    }

    #[test]
    fn psi_fifty_calibration() {
        let p = pick_params_for_psi(50.0, 1000, 0.0, 1000.0).unwrap();
        assert!((p.lambda_p - 0.5).abs() < 1e-12);
        let counts: Vec<f64> = (1000..1050)
            .map(|seed| simulate_sfp(p.mu, 0.0, 1000.0, seed, None).unwrap().len() as f64)
            .collect();
        let m = median(&counts).unwrap();
        assert!((400.0..=600.0).contains(&m), "median SFP count {m}");
    }
}
