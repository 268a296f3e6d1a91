//! Bayesian interpolation of the piecewise-linear models: floored weight recursion and
//! weighted residuals/covariances per sensor mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat4, Mat5, Mat54, Vec5};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    /// Floor `rho` applied after each Bayes update.
    pub floor: f64,
    /// Rescale to unit sum after flooring.
    pub renormalize: bool,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { floor: 1e-3, renormalize: true }
    }
}

impl WeightConfig {
    pub fn validate(&self, models: usize) -> Result<()> {
        if !(self.floor >= 0.0 && self.floor * models as f64 <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "weight floor {} is infeasible for {models} models",
                self.floor
            )));
        }
        Ok(())
    }
}

/// Result of one weight update.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightUpdate {
    pub weights: Vec<f64>,
    /// Set when every likelihood vanished and the previous weights were kept.
    pub degenerate: bool,
}

/// Uniform initial weights.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Bayes update with log-likelihoods (`-inf` allowed), then floor and optional renormalization.
pub fn update_weights_log(prev: &[f64], log_f: &[f64], cfg: &WeightConfig) -> WeightUpdate {
    debug_assert_eq!(prev.len(), log_f.len());
    let log_post: Vec<f64> = prev.iter().zip(log_f).map(|(w, l)| w.ln() + l).collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return WeightUpdate { weights: prev.to_vec(), degenerate: true };
    }
    let mut w: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    apply_floor(&mut w, cfg);
    WeightUpdate { weights: w, degenerate: false }
}

/// Bayes update from plain likelihood values.
pub fn update_weights(prev: &[f64], likelihoods: &[f64], cfg: &WeightConfig) -> WeightUpdate {
    let log_f: Vec<f64> = likelihoods.iter().map(|f| f.ln()).collect();
    update_weights_log(prev, &log_f, cfg)
}

/// Raises entries below the floor to it; with renormalization the excess is taken
/// proportionally from the entries above the floor so the sum stays 1 and the floor holds.
fn apply_floor(w: &mut [f64], cfg: &WeightConfig) {
    let rho = cfg.floor;
    if !cfg.renormalize {
        w.iter_mut().filter(|v| **v <= rho).for_each(|v| *v = rho);
        return;
    }
    // iterate because shrinking the free entries can push more of them onto the floor
    loop {
        let (floored, free): (Vec<usize>, Vec<usize>) = (0..w.len()).partition(|&i| w[i] <= rho);
        if floored.is_empty() {
            return;
        }
        let budget = 1.0 - rho * floored.len() as f64;
        let free_sum: f64 = free.iter().map(|&i| w[i]).sum();
        floored.iter().for_each(|&i| w[i] = rho);
        if free.is_empty() || free_sum <= 0.0 {
            return;
        }
        let scale = budget / free_sum;
        free.iter().for_each(|&i| w[i] *= scale);
        if free.iter().all(|&i| w[i] > rho) {
            return;
        }
    }
}

/// Weighted model of one sensor mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMode {
    pub a: Mat4,
    pub c: Mat54,
    pub gamma: Vec5,
    pub s: Mat5,
}

/// `A = sum w A^i`, `C = sum w C^i`, `gamma = sum w gamma^i`, `S = sum w^2 S^i`.
pub fn combine(weights: &[f64], a: &[Mat4], c: &[Mat54], gammas: &[Vec5], covs: &[Mat5]) -> FusedMode {
    let mut fused = FusedMode { a: Mat4::zeros(), c: Mat54::zeros(), gamma: Vec5::zeros(), s: Mat5::zeros() };
    for i in 0..weights.len() {
        let w = weights[i];
        fused.a += a[i] * w;
        fused.c += c[i] * w;
        fused.gamma += gammas[i] * w;
        fused.s += covs[i] * (w * w);
    }
    fused
}

/// Residual and covariance part of [`combine`].
pub fn combine_residuals<'a>(weights: &[f64], items: impl Iterator<Item = (&'a Vec5, &'a Mat5)>) -> (Vec5, Mat5) {
    let mut gamma = Vec5::zeros();
    let mut s = Mat5::zeros();
    for (w, (g, cov)) in weights.iter().zip(items) {
        gamma += g * *w;
        s += cov * (w * w);
    }
    (gamma, s)
}
