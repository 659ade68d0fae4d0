//! Robust bivariate Gaussian over `(ln lambda_p, ln mu)` and Mahalanobis anomaly flags.

use serde::{Deserialize, Serialize};

use crate::error::{BuscaError, Result};
use crate::stats::{mad, median};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const MIN_POINTS: usize = 10;

/// Consistency factor turning a MAD into a standard deviation under normality.
const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustGaussian {
    pub center: [f64; 2],
    /// Robust marginal standard deviations.
    pub scale: [f64; 2],
    pub correlation: f64,
}

impl RobustGaussian {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let [sx, sy] = self.scale;
        let c = self.correlation * sx * sy;
        [[sx * sx, c], [c, sy * sy]]
    }

    /// Squared Mahalanobis distance of `x` from the center.
    pub fn mahalanobis2(&self, x: [f64; 2]) -> f64 {
        let u = (x[0] - self.center[0]) / self.scale[0];
        let v = (x[1] - self.center[1]) / self.scale[1];
        let r = self.correlation;
        (u * u - 2.0 * r * u * v + v * v) / (1.0 - r * r)
    }
}

/// Median center, MAD scales, and the median correlation
/// `(m+^2 - m-^2) / (m+^2 + m-^2)` with `m± = median |u ± v|` over standardized coordinates.
pub fn fit_robust_gaussian(points: &[[f64; 2]]) -> Result<RobustGaussian> {
    if points.len() < MIN_POINTS {
        return Err(BuscaError::TooFewEvents {
            required: MIN_POINTS,
            actual: points.len(),
        });
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(BuscaError::InvalidParameter("points must be finite".into()));
    }
    let mut center = [0.0; 2];
    let mut scale = [0.0; 2];
    for k in 0..2 {
        let col: Vec<f64> = points.iter().map(|p| p[k]).collect();
        center[k] = median(&col).expect("non-empty");
        scale[k] = MAD_SCALE * mad(&col).expect("non-empty");
        if !(scale[k] > 0.0) {
            return Err(BuscaError::Degenerate(format!("coordinate {k} has zero MAD")));
        }
    }
    let (plus, minus): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|p| {
            let u = (p[0] - center[0]) / scale[0];
            let v = (p[1] - center[1]) / scale[1];
            ((u + v).abs(), (u - v).abs())
        })
        .unzip();
    let mp = median(&plus).expect("non-empty").powi(2);
    let mm = median(&minus).expect("non-empty").powi(2);
    let correlation = (mp - mm) / (mp + mm);
    if !(correlation.abs() < 1.0) {
        return Err(BuscaError::SingularCovariance);
    }
    Ok(RobustGaussian {
        center,
        scale,
        correlation,
    })
}

/// `(1 - alpha)` quantile of the chi-square distribution with two degrees of freedom.
pub fn chi2_2_quantile(alpha: f64) -> f64 {
    -2.0 * alpha.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub d2: f64,
    pub is_anomalous: bool,
}

/// Flags points whose `D²` exceeds the chi-square(2) quantile at level `alpha`.
pub fn anomaly_scores(points: &[[f64; 2]], model: &RobustGaussian, alpha: f64) -> Result<Vec<AnomalyScore>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BuscaError::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let [sx, sy] = model.scale;
    if !(sx > 0.0 && sy > 0.0 && model.correlation.abs() < 1.0) {
        return Err(BuscaError::SingularCovariance);
    }
    let threshold = chi2_2_quantile(alpha);
    Ok(points
        .iter()
        .map(|&p| {
            let d2 = model.mahalanobis2(p);
            AnomalyScore {
                d2,
                is_anomalous: d2 > threshold,
            }
        })
        .collect())
}
