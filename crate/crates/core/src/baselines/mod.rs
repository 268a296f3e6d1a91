//! Comparison estimators: fixed-anchor linear filters (MLKF) and extended, unscented and
//! cubature Kalman filters over the nonlinear engine model, each feeding the same decision layer.

mod nonlinear;
mod timing;

pub use nonlinear::{Estimate, Innovation, NonlinearBank, NonlinearKind};
pub use timing::{timing_harness, TimingReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual generator used by a diagnosis session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Hybrid filters anchored on the OBEM.
    Mhkf,
    /// Linear filters anchored on fixed trim points.
    Mlkf,
    Ekf,
    Ukf,
    Ckf,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mhkf, Method::Mlkf, Method::Ekf, Method::Ukf, Method::Ckf];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mhkf => "mhkf",
            Method::Mlkf => "mlkf",
            Method::Ekf => "ekf",
            Method::Ukf => "ukf",
            Method::Ckf => "ckf",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mhkf" | "hkf" => Ok(Method::Mhkf),
            "mlkf" | "lkf" => Ok(Method::Mlkf),
            "ekf" => Ok(Method::Ekf),
            "ukf" => Ok(Method::Ukf),
            "ckf" => Ok(Method::Ckf),
            other => Err(Error::Validation(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unscented transform spread parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaPointConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for SigmaPointConfig {
    fn default() -> Self {
        Self { alpha: 1e-3, beta: 2.0, kappa: 0.0 }
    }
}

impl SigmaPointConfig {
    /// `(lambda, mean weights, covariance weights)` for state dimension `n`; point 0 is the mean.
    pub fn weights(&self, n: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let mut wm = vec![1.0 / (2.0 * (nf + lambda)); 2 * n + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / (nf + lambda);
        wc[0] = wm[0] + 1.0 - self.alpha * self.alpha + self.beta;
        (lambda, wm, wc)
    }
}

/// Settings of the nonlinear baseline filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Sampling period of EKF/UKF/CKF [s]; a multiple of the plant step.
    pub period: f64,
    pub sigma_points: SigmaPointConfig,
    /// Diagonal loading added when a covariance loses definiteness.
    pub jitter: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { period: 0.1, sigma_points: SigmaPointConfig::default(), jitter: 1e-12 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unscented_mean_weights_sum_to_one() {
        let (lambda, wm, wc) = SigmaPointConfig::default().weights(4);
        assert!((wm.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((lambda + 4.0 - 4e-6).abs() < 1e-12);
        assert!((wc[0] - wm[0] - (3.0 - 1e-6)).abs() < 1e-6);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("imm".parse::<Method>().is_err());
    }
}
