//! Severity estimation for isolated sensor biases: failure-signature recursions, weighted
//! least-squares bias estimate over a post-detection window, and reconstruction error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{combine_residuals, update_weights_log, WeightConfig};
use crate::hkf::log_likelihood;
use crate::linalg::{CovFactor, Mat45, Mat5, Vec4, Vec5};
use crate::linearize::{DiscretePwlModel, ModelBank};

/// Signature matrices of one operating point: `G` maps a unit bias to the residual, `J` to the
/// state correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureState {
    pub g: Mat5,
    pub j: Mat45,
}

impl SignatureState {
    /// State before the detection sample (`J = 0`).
    pub fn before_detection() -> Self {
        Self { g: Mat5::identity(), j: Mat45::zeros() }
    }
}

/// `G(k) = I - C A J(k-1)`, `J(k) = A J(k-1) + K G(k)` with the measurement-update gain, so
/// `A J` is the imprint on the predicted deviation of the predictor-form filter.
pub fn signature_step(prev: &SignatureState, model: &DiscretePwlModel) -> SignatureState {
    signature_step_with(prev, model, &model.filter_gain())
}

/// [`signature_step`] with a precomputed gain.
pub fn signature_step_with(prev: &SignatureState, model: &DiscretePwlModel, gain: &Mat45) -> SignatureState {
    let g = Mat5::identity() - model.c * model.a * prev.j;
    let j = model.a * prev.j + gain * g;
    SignatureState { g, j }
}

/// Weighted sum of per-point signatures.
pub fn fuse_signatures(weights: &[f64], sigs: &[SignatureState]) -> SignatureState {
    let mut out = SignatureState { g: Mat5::zeros(), j: Mat45::zeros() };
    for (w, s) in weights.iter().zip(sigs) {
        out.g += s.g * *w;
        out.j += s.j * *w;
    }
    out
}

/// Windowed maximum-likelihood bias estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    /// Channels (0-based) whose biases were estimated jointly.
    pub channels: Vec<usize>,
    /// Estimated biases in normalized units, one per channel.
    pub bias: Vec<f64>,
    /// `Z' sum G' S^-1 gamma`
    pub d: Vec<f64>,
    /// `Z' sum G' S^-1 G Z`, row-major.
    pub c: Vec<f64>,
    /// Log-likelihood-ratio criterion at the estimate.
    pub criterion: f64,
    /// Samples in the window.
    pub window: usize,
}

impl BiasEstimate {
    /// Criterion `2 b'd - b'c b` for an arbitrary bias vector.
    pub fn criterion_at(&self, b: &[f64]) -> f64 {
        let m = self.channels.len();
        let mut val = 0.0;
        for r in 0..m {
            val += 2.0 * b[r] * self.d[r];
            for c in 0..m {
                val -= b[r] * self.c[r * m + c] * b[c];
            }
        }
        val
    }
}

/// Accumulates `d` and `c` over a window and solves for the bias. `residuals`, `signatures`
/// and the frozen covariance refer to the healthy-mode fused filter.
pub fn estimate_bias(residuals: &[Vec5], signatures: &[Mat5], s: &Mat5, channels: &[usize]) -> Result<BiasEstimate> {
    if residuals.len() != signatures.len() || residuals.is_empty() || channels.is_empty() {
        return Err(Error::InvalidInput("bias estimation needs matching, nonempty windows".into()));
    }
    let s_inv = CovFactor::new(s)?.inverse();
    let m = channels.len();
    let mut d = DVector::<f64>::zeros(m);
    let mut c = DMatrix::<f64>::zeros(m, m);
    for (gamma, g) in residuals.iter().zip(signatures) {
        let gz = DMatrix::from_fn(5, m, |r, col| g[(r, channels[col])]);
        let w = gz.transpose() * DMatrix::from_fn(5, 5, |r, col| s_inv[(r, col)]);
        d += &w * DVector::from_iterator(5, gamma.iter().copied());
        c += &w * &gz;
    }
    let smallest = c.clone().symmetric_eigen().eigenvalues.min();
    if !(smallest > 1e-12) {
        return Err(Error::Unidentifiable { c_s: smallest });
    }
    let b = c.clone().cholesky().ok_or(Error::Unidentifiable { c_s: smallest })?.solve(&d);
    let mut est = BiasEstimate {
        channels: channels.to_vec(),
        bias: b.iter().copied().collect(),
        d: d.iter().copied().collect(),
        c: c.transpose().iter().copied().collect(),
        criterion: 0.0,
        window: residuals.len(),
    };
    est.criterion = est.criterion_at(&est.bias);
    Ok(est)
}

/// Normalized measurement and OBEM output at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub y: Vec5,
    pub y_obem: Vec5,
}

/// Healthy-mode filters over `window` started with zero deviation at the first sample, with
/// fused residuals and signatures; returns the bias estimate for `channels`.
pub fn identify(
    bank: &ModelBank,
    window: &[TraceSample],
    channels: &[usize],
    weights: &WeightConfig,
) -> Result<BiasEstimate> {
    let l = bank.len();
    let factors = bank.models.iter().map(|m| CovFactor::new(&m.s)).collect::<Result<Vec<_>>>()?;
    let gains: Vec<Mat45> = bank.models.iter().map(|m| m.filter_gain()).collect();
    let mut dev = vec![Vec4::zeros(); l];
    let mut sig = vec![SignatureState::before_detection(); l];
    let mut w = crate::fusion::uniform(l);
    let mut residuals = Vec::with_capacity(window.len());
    let mut signatures = Vec::with_capacity(window.len());
    let mut frozen_s = None;
    for sample in window {
        let mut gammas = Vec::with_capacity(l);
        let mut logs = Vec::with_capacity(l);
        for (i, m) in bank.models.iter().enumerate() {
            let gamma = sample.y - (m.c * dev[i] + sample.y_obem);
            dev[i] = m.a * dev[i] + m.k * gamma;
            logs.push(log_likelihood(&gamma, &factors[i]));
            gammas.push(gamma);
            sig[i] = signature_step_with(&sig[i], m, &gains[i]);
        }
        w = update_weights_log(&w, &logs, weights).weights;
        let (gamma_c, s_c) = combine_residuals(&w, gammas.iter().zip(bank.models.iter().map(|m| &m.s)));
        frozen_s.get_or_insert(s_c);
        residuals.push(gamma_c);
        signatures.push(fuse_signatures(&w, &sig).g);
    }
    let s = frozen_s.ok_or(Error::InvalidInput("empty identification window".into()))?;
    estimate_bias(&residuals, &signatures, &s, channels)
}

/// Reconstruction quality of an estimated bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wmsne {
    /// Weighted mean squared relative output error, percent.
    pub percent: f64,
    /// Channel samples dropped because the measured output was zero.
    pub excluded: usize,
}

/// Runs `L` reconstruction filters carrying the estimated offset `bias_offset` (normalized) from
/// the first sample of `trace`, weights them with their own Bayes recursion, and averages the
/// squared relative output error (mean over channels) with those weights, then over points.
pub fn wmsne(bank: &ModelBank, trace: &[TraceSample], bias_offset: &Vec5, weights: &WeightConfig) -> Result<Wmsne> {
    let l = bank.len();
    let factors = bank.models.iter().map(|m| CovFactor::new(&m.s)).collect::<Result<Vec<_>>>()?;
    let mut dev = vec![Vec4::zeros(); l];
    let mut w = crate::fusion::uniform(l);
    let mut num = vec![0.0; l];
    let mut den = vec![0.0; l];
    let mut excluded = 0;
    for sample in trace {
        let mut logs = Vec::with_capacity(l);
        let mut errs = Vec::with_capacity(l);
        for (i, m) in bank.models.iter().enumerate() {
            let y_hat = m.c * dev[i] + sample.y_obem + bias_offset;
            let gamma = sample.y - y_hat;
            dev[i] = m.a * dev[i] + m.k * gamma;
            logs.push(log_likelihood(&gamma, &factors[i]));
            let mut sum = 0.0;
            let mut n = 0;
            for ch in 0..5 {
                if sample.y[ch] == 0.0 {
                    excluded += 1;
                    continue;
                }
                sum += (gamma[ch] / sample.y[ch]).powi(2);
                n += 1;
            }
            errs.push(if n > 0 { Some(sum / n as f64) } else { None });
        }
        w = update_weights_log(&w, &logs, weights).weights;
        for i in 0..l {
            if let Some(e) = errs[i] {
                num[i] += w[i] * e;
                den[i] += w[i];
            }
        }
    }
    let per_point: Vec<f64> = (0..l).filter(|i| den[*i] > 0.0).map(|i| num[i] / den[i]).collect();
    if per_point.is_empty() {
        return Err(Error::InvalidInput("no usable samples for the reconstruction error".into()));
    }
    let percent = 100.0 * per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(Wmsne { percent, excluded })
}
