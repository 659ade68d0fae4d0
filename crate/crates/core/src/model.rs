//! Parameter, fit and label types shared across the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};

/// Parameters of the Poisson + self-feeding mixture.
///
/// `lambda_p` is the Poisson rate (events per unit time). `mu` is the median
/// inter-event time of the self-feeding component; `f64::INFINITY` means there
/// is no self-feeding component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub lambda_p: f64,
    pub mu: f64,
}

impl MixtureParams {
    pub fn new(lambda_p: f64, mu: f64) -> Result<Self> {
        if !(lambda_p >= 0.0) || !lambda_p.is_finite() {
            return Err(BuscaError::InvalidParameter(format!(
                "lambda_p must be finite and >= 0, got {lambda_p}"
            )));
        }
        if !(mu > 0.0) {
            return Err(BuscaError::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        if lambda_p == 0.0 && mu.is_infinite() {
            return Err(BuscaError::DegenerateParams);
        }
        Ok(Self { lambda_p, mu })
    }

    pub fn pure_poisson(lambda_p: f64) -> Result<Self> {
        Self::new(lambda_p, f64::INFINITY)
    }

    pub fn pure_sfp(mu: f64) -> Result<Self> {
        Self::new(0.0, mu)
    }

    pub fn has_poisson(&self) -> bool {
        self.lambda_p > 0.0
    }

    pub fn has_sfp(&self) -> bool {
        self.mu.is_finite()
    }

    pub fn is_mixed(&self) -> bool {
        self.has_poisson() && self.has_sfp()
    }
}

/// Burstiness scale estimate `(1 - lambda_p * (b - a) / n) * 100`, clamped to `[0, 100]`.
pub fn burstiness_scale(lambda_p: f64, duration: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ((1.0 - lambda_p * duration / n as f64) * 100.0).clamp(0.0, 100.0)
}

/// Result of fitting the mixture to one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub params: MixtureParams,
    /// Burstiness scale in percent.
    pub psi: f64,
    /// Maximized expected log-likelihood at the EM estimate `(lambda_p, mu_em)`.
    pub log_likelihood: f64,
    /// The EM estimate of `mu`, before any refinement.
    pub mu_em: f64,
    pub em_iterations: usize,
    pub converged: bool,
    /// Whether `params.mu` was replaced by the pseudo-event deletion estimator.
    pub mu_refined: bool,
}

/// Source process of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Poisson,
    Sfp,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Poisson => "POISSON",
            Label::Sfp => "SFP",
        })
    }
}

impl FromStr for Label {
    type Err = BuscaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "POISSON" => Ok(Label::Poisson),
            "SFP" => Ok(Label::Sfp),
            other => Err(BuscaError::InvalidParameter(format!("unknown label {other:?}"))),
        }
    }
}

/// Per-event labels from one disentangling replication with its goodness of fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub labels: Vec<Label>,
    pub r2_poisson: f64,
    pub r2_sfp: f64,
}

impl LabelAssignment {
    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Timestamps of the events carrying `label`.
    pub fn select(&self, timestamps: &[f64], label: Label) -> Vec<f64> {
        timestamps
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(&t, _)| t)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    PurePoisson,
    PureSfp,
    Mixed,
    Ambiguous,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::PurePoisson => "PURE_POISSON",
            Verdict::PureSfp => "PURE_SFP",
            Verdict::Mixed => "MIXED",
            Verdict::Ambiguous => "AMBIGUOUS",
        })
    }
}

impl FromStr for Verdict {
    type Err = BuscaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PURE_POISSON" => Ok(Verdict::PurePoisson),
            "PURE_SFP" => Ok(Verdict::PureSfp),
            "MIXED" => Ok(Verdict::Mixed),
            "AMBIGUOUS" => Ok(Verdict::Ambiguous),
            other => Err(BuscaError::InvalidParameter(format!("unknown verdict {other:?}"))),
        }
    }
}

/// Likelihood-ratio classification of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// p-value against the pure Poisson null.
    pub phi_p: f64,
    /// p-value against the pure self-feeding null.
    pub phi_s: f64,
    pub verdict: Verdict,
    pub alpha: f64,
    pub r_poisson: f64,
    pub r_sfp: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(MixtureParams::new(1.0, 2.0).unwrap().is_mixed());
        assert!(!MixtureParams::pure_poisson(1.0).unwrap().has_sfp());
        assert!(!MixtureParams::pure_sfp(1.0).unwrap().has_poisson());
        assert_eq!(MixtureParams::new(0.0, f64::INFINITY), Err(BuscaError::DegenerateParams));
        assert!(MixtureParams::new(-1.0, 1.0).is_err());
        assert!(MixtureParams::new(1.0, 0.0).is_err());
        assert!(MixtureParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn psi_clamped() {
        assert_eq!(burstiness_scale(0.5, 100.0, 100), 50.0);
        assert_eq!(burstiness_scale(2.0, 100.0, 100), 0.0);
        assert_eq!(burstiness_scale(0.0, 100.0, 100), 100.0);
    }

    #[test]
    fn label_round_trip() {
        for l in [Label::Poisson, Label::Sfp] {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        for v in [Verdict::PurePoisson, Verdict::PureSfp, Verdict::Mixed, Verdict::Ambiguous] {
            assert_eq!(v.to_string().parse::<Verdict>().unwrap(), v);
        }
    }
}
