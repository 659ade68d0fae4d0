//! Likelihood-ratio classification against the pure Poisson and pure self-feeding nulls.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Result;
use crate::estimate::SearchBounds;
use crate::likelihood::{loglik_pure_poisson, loglik_pure_sfp};
use crate::model::{ClassificationResult, MixtureFit, Verdict};
use crate::optim::grid_golden_max_log;
use crate::series::EventSeries;

pub const DEFAULT_ALPHA: f64 = 0.05;

const SFP_GRID: usize = 40;
const SFP_GOLDEN_ITERATIONS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullModel {
    PurePoisson,
    PureSfp,
}

/// Maximum of the pure self-feeding log-likelihood over `mu`: `(mu_hat, loglik)`.
pub fn fit_pure_sfp(series: &EventSeries) -> Result<(f64, f64)> {
    series.require_events(2)?;
    let b = SearchBounds::for_series(series);
    let (mu, ll) = grid_golden_max_log(
        |mu| loglik_pure_sfp(series, mu).unwrap_or(f64::NEG_INFINITY),
        b.mu_min,
        b.mu_max,
        SFP_GRID,
        SFP_GOLDEN_ITERATIONS,
    );
    Ok((mu, ll))
}

/// `R = 2 (l_fit - l_null)`, floored at zero.
pub fn lrt_statistic(series: &EventSeries, fit: &MixtureFit, null: NullModel) -> Result<f64> {
    let null_ll = match null {
        NullModel::PurePoisson => loglik_pure_poisson(series)?.1,
        NullModel::PureSfp => fit_pure_sfp(series)?.1,
    };
    Ok((2.0 * (fit.log_likelihood - null_ll)).max(0.0))
}

/// `1 - F(R)` for the chi-square distribution with one degree of freedom.
pub fn p_value(r: f64) -> f64 {
    let chi = ChiSquared::new(1.0).expect("one degree of freedom is valid");
    chi.sf(r.max(0.0)).clamp(0.0, 1.0)
}

pub fn verdict(phi_p: f64, phi_s: f64, alpha: f64) -> Verdict {
    match (phi_p > alpha, phi_s > alpha) {
        (true, false) => Verdict::PurePoisson,
        (false, true) => Verdict::PureSfp,
        (false, false) => Verdict::Mixed,
        (true, true) => Verdict::Ambiguous,
    }
}

pub fn classify(series: &EventSeries, fit: &MixtureFit, alpha: f64) -> Result<ClassificationResult> {
    let r_poisson = lrt_statistic(series, fit, NullModel::PurePoisson)?;
    let r_sfp = lrt_statistic(series, fit, NullModel::PureSfp)?;
    let (phi_p, phi_s) = (p_value(r_poisson), p_value(r_sfp));
    Ok(ClassificationResult {
        phi_p,
        phi_s,
        verdict: verdict(phi_p, phi_s, alpha),
        alpha,
        r_poisson,
        r_sfp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{fit_em, EmConfig};
    use crate::model::MixtureParams;
    use crate::simulate::{pick_params_for_psi, simulate_mixture, simulate_poisson, simulate_sfp};
    use proptest::prelude::*;

    fn fit(series: &EventSeries) -> MixtureFit {
        fit_em(series, &EmConfig::default()).unwrap()
    }

    #[test]
    fn verdict_table() {
        assert_eq!(verdict(0.5, 0.01, 0.05), Verdict::PurePoisson);
        assert_eq!(verdict(0.01, 0.5, 0.05), Verdict::PureSfp);
        assert_eq!(verdict(0.01, 0.01, 0.05), Verdict::Mixed);
        assert_eq!(verdict(1.0, 1.0, 0.05), Verdict::Ambiguous);
        assert_eq!(verdict(0.05, 0.05, 0.05), Verdict::Mixed);
    }

    #[test]
    fn p_value_reference_points() {
        assert_eq!(p_value(0.0), 1.0);
        assert!((p_value(3.841458820694124) - 0.05).abs() < 1e-9);
        assert!((p_value(6.6348966010212145) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn same_model_gives_zero_statistic() {
        let s = simulate_poisson(1.0, 0.0, 200.0, 1).unwrap();
        let ll = loglik_pure_poisson(&s).unwrap().1;
        let f = MixtureFit {
            params: MixtureParams::pure_poisson(1.0).unwrap(),
            psi: 0.0,
            log_likelihood: ll,
            mu_em: f64::INFINITY,
            em_iterations: 1,
            converged: true,
            mu_refined: false,
        };
        assert_eq!(lrt_statistic(&s, &f, NullModel::PurePoisson).unwrap(), 0.0);
    }

    #[test]
    fn zero_statistics_are_ambiguous() {
        let s = simulate_poisson(1.0, 0.0, 200.0, 1).unwrap();
        let f = MixtureFit {
            params: MixtureParams::pure_poisson(1.0).unwrap(),
            psi: 0.0,
            log_likelihood: f64::NEG_INFINITY,
            mu_em: f64::INFINITY,
            em_iterations: 1,
            converged: true,
            mu_refined: false,
        };
        let c = classify(&s, &f, DEFAULT_ALPHA).unwrap();
        assert_eq!((c.phi_p, c.phi_s), (1.0, 1.0));
        assert_eq!(c.verdict, Verdict::Ambiguous);
    }

    #[test]
    fn pure_poisson_mostly_accepted() {
        let accepted = (0..20)
            .filter(|&seed| {
                let s = simulate_poisson(1.0, 0.0, 500.0, seed).unwrap();
                classify(&s, &fit(&s), DEFAULT_ALPHA).unwrap().phi_p > 0.05
            })
            .count();
        assert!(accepted > 10, "{accepted}/20");
    }

    #[test]
    fn pure_sfp_rejects_poisson() {
        for seed in 0..10 {
            let s = simulate_sfp(1.0, 0.0, 1e6, seed, None).unwrap();
            let s = EventSeries::new("", &s.timestamps()[..500], Some(0.0), Some(s.timestamps()[499])).unwrap();
            let c = classify(&s, &fit(&s), DEFAULT_ALPHA).unwrap();
            assert!(c.phi_p < 1e-6, "seed {seed}: {}", c.phi_p);
        }
    }

    #[test]
    fn mixed_series_are_mixed() {
        let p = pick_params_for_psi(50.0, 1000, 0.0, 1000.0).unwrap();
        for seed in 0..5 {
            let s = simulate_mixture(&p, 0.0, 1000.0, seed).unwrap().series;
            assert_eq!(classify(&s, &fit(&s), DEFAULT_ALPHA).unwrap().verdict, Verdict::Mixed);
        }
    }

    #[test]
    fn statistic_is_scale_invariant() {
        let p = MixtureParams::new(0.5, 1.0).unwrap();
        for seed in 0..3 {
            let s = simulate_mixture(&p, 0.0, 400.0, seed).unwrap().series;
            let m = s.rescaled(60.0, 0.0).unwrap();
            let (a, b) = (classify(&s, &fit(&s), 0.05).unwrap(), classify(&m, &fit(&m), 0.05).unwrap());
            assert!((a.r_poisson - b.r_poisson).abs() < 1e-6, "{} vs {}", a.r_poisson, b.r_poisson);
            assert!((a.r_sfp - b.r_sfp).abs() < 1e-6, "{} vs {}", a.r_sfp, b.r_sfp);
            assert_eq!(a.verdict, b.verdict);
        }
    }

    proptest! {
        #[test]
        fn p_value_is_monotone(r in 0.0f64..50.0, d in 0.0f64..10.0) {
            let (a, b) = (p_value(r), p_value(r + d));
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a);
        }
    }
}
