//! Hybrid Kalman filter bank: linear steady-state filters whose anchor trajectory is a noise-free
//! nonlinear on-board engine model (OBEM) instead of a fixed trim point.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{AmbientCondition, Engine, EngineState, HealthFactors};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, CovFactor, Mat4, Mat5, Vec4, Vec5};
use crate::fusion::{combine_residuals, uniform, update_weights_log, WeightConfig};
use crate::linearize::ModelBank;
use crate::mm_fdi::{ModeResidual, ResidualSource, Sample};

/// Smallest likelihood returned by [`likelihood`].
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Noise-free nonlinear reference model driven by the plant's fuel flow and nominal ambient.
#[derive(Debug, Clone)]
pub struct ObemRunner {
    engine: Engine,
    state: EngineState,
    health: HealthFactors,
    /// Samples between baseline refreshes (`None`: never refreshed automatically).
    pub update_interval: Option<usize>,
}

impl ObemRunner {
    pub fn new(engine: Engine, state: EngineState, health: HealthFactors) -> Result<Self> {
        health.validate()?;
        state.validate()?;
        Ok(Self { engine, state, health, update_interval: None })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn health(&self) -> &HealthFactors {
        &self.health
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn output(&self, amb: &AmbientCondition) -> Result<Vec5> {
        self.engine.outputs(&self.state, &self.health, amb)
    }

    /// Advances one sample and returns the new state and its outputs.
    pub fn step(&mut self, fuel_flow: f64, amb: &AmbientCondition, dt: f64) -> Result<(EngineState, Vec5)> {
        self.state = self.engine.step(&self.state, &self.health, fuel_flow, amb, dt)?;
        Ok((self.state, self.output(amb)?))
    }

    /// Replaces the health baselines; the linear model bank is left untouched.
    pub fn update_baseline(&mut self, health: HealthFactors) -> Result<()> {
        health.validate()?;
        self.health = health;
        Ok(())
    }
}

/// Sensor-mode hypothesis: a constant output offset in normalized units (`b_dj a_j`; zero for
/// the healthy mode, sums of offsets for concurrent-fault hypotheses).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub offset: Vec5,
}

impl Hypothesis {
    pub fn healthy() -> Self {
        Self { offset: Vec5::zeros() }
    }

    /// Bias `b` on channel `channel` (0-based).
    pub fn bias(channel: usize, b: f64) -> Self {
        let mut offset = Vec5::zeros();
        offset[channel] = b;
        Self { offset }
    }

    /// Healthy mode followed by one single-sensor bias hypothesis per channel.
    pub fn single_fault_set(b: f64) -> Vec<Hypothesis> {
        std::iter::once(Self::healthy()).chain((0..5).map(|c| Self::bias(c, b))).collect()
    }
}

/// How the innovation covariance `S` entering the likelihood is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CovarianceMode {
    /// `C P C' + R` from the Riccati solution, constant per operating point.
    Stationary,
    /// Exponentially weighted second moment of the filter's own residuals; the stationary value
    /// is used until `warmup` samples have been seen.
    Empirical { forgetting: f64, warmup: usize },
}

impl Default for CovarianceMode {
    fn default() -> Self {
        CovarianceMode::Stationary
    }
}

/// `ln f` for the zero-mean Gaussian density `(2 pi)^{-5/2} |S|^{-1/2} exp(-g'S^-1 g / 2)`.
pub fn log_likelihood(gamma: &Vec5, s: &CovFactor) -> f64 {
    -0.5 * (5.0 * (2.0 * PI).ln() + s.log_det() + s.mahalanobis(gamma))
}

/// Gaussian likelihood of a residual, clamped below at [`LIKELIHOOD_FLOOR`].
pub fn likelihood(gamma: &Vec5, s: &Mat5) -> Result<f64> {
    let f = CovFactor::new(s)?;
    Ok(log_likelihood(gamma, &f).exp().max(LIKELIHOOD_FLOOR))
}

/// Per-filter output of one bank step.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub gamma: Vec5,
    pub s: Mat5,
    /// `ln f`, `-inf` when the filter is faulted out.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
struct FilterState {
    deviation: Vec4,
    second_moment: Mat5,
    seen: usize,
    faulted: bool,
    /// Prediction covariance, propagated only with online gains.
    p: Mat4,
}

impl FilterState {
    fn new(deviation: Vec4, p: Mat4) -> Self {
        Self { deviation, second_moment: Mat5::zeros(), seen: 0, faulted: false, p }
    }
}

/// Where the filter gain comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Precomputed steady-state gain from the bank.
    #[default]
    Stored,
    /// Time-varying gain from a Riccati step every sample (same `Q`, `R` as the bank).
    Online,
}

/// Per-point anchor of one step: the output the deviation model is added to, and the forcing
/// term entering the state update (`0` for the OBEM-anchored filter, `B du` for fixed anchors).
#[derive(Debug, Clone, Copy)]
pub struct Anchor {
    pub y: Vec5,
    pub drive: Vec4,
}

/// `L x (number of hypotheses)` steady-state filters sharing one model bank.
#[derive(Debug, Clone)]
pub struct FilterBank {
    bank: Arc<ModelBank>,
    hypotheses: Vec<Hypothesis>,
    /// `[mode][point]`
    filters: Vec<Vec<FilterState>>,
    stationary: Vec<CovFactor>,
    cov_mode: CovarianceMode,
    gain_mode: GainMode,
}

impl FilterBank {
    pub fn new(bank: Arc<ModelBank>, hypotheses: Vec<Hypothesis>, cov_mode: CovarianceMode) -> Result<Self> {
        if bank.is_empty() || hypotheses.is_empty() {
            return Err(Error::InvalidInput("filter bank needs models and hypotheses".into()));
        }
        if let CovarianceMode::Empirical { forgetting, .. } = cov_mode {
            if !(forgetting > 0.0 && forgetting < 1.0) {
                return Err(Error::InvalidInput("forgetting factor must lie in (0, 1)".into()));
            }
        }
        let stationary = bank.models.iter().map(|m| CovFactor::new(&m.s)).collect::<Result<Vec<_>>>()?;
        let filters = vec![Self::fresh_row(&bank, None); hypotheses.len()];
        Ok(Self { bank, hypotheses, filters, stationary, cov_mode, gain_mode: GainMode::Stored })
    }

    pub fn with_gain_mode(mut self, gain_mode: GainMode) -> Self {
        self.gain_mode = gain_mode;
        self
    }

    fn fresh_row(bank: &ModelBank, seed: Option<&[FilterState]>) -> Vec<FilterState> {
        match seed {
            Some(row) => row.iter().map(|f| FilterState::new(f.deviation, f.p)).collect(),
            None => (0..bank.len()).map(|_| FilterState::new(Vec4::zeros(), bank.q)).collect(),
        }
    }

    pub fn bank(&self) -> &Arc<ModelBank> {
        &self.bank
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn modes(&self) -> usize {
        self.hypotheses.len()
    }

    /// Deviation estimates `x_hat - anchor` of one mode, per operating point.
    pub fn deviations(&self, mode: usize) -> Vec<Vec4> {
        self.filters[mode].iter().map(|f| f.deviation).collect()
    }

    /// Replaces the hypothesis set. Every new filter starts from the deviations of `seed_mode`
    /// (zero when `None`).
    pub fn reset_hypotheses(&mut self, hypotheses: Vec<Hypothesis>, seed_mode: Option<usize>) {
        let row = Self::fresh_row(&self.bank, seed_mode.map(|m| self.filters[m].as_slice()));
        self.filters = vec![row; hypotheses.len()];
        self.hypotheses = hypotheses;
    }

    pub fn set_deviations(&mut self, mode: usize, deviations: &[Vec4]) {
        for (f, d) in self.filters[mode].iter_mut().zip(deviations) {
            f.deviation = *d;
        }
    }

    /// Residual `y - (C dev + anchor + offset)` of every filter, followed by the state update
    /// `dev' = A dev + drive + K gamma`. Returns outputs indexed `[mode][point]`.
    pub fn step(&mut self, y: &Vec5, anchors: &[Anchor]) -> Result<Vec<Vec<FilterOutput>>> {
        if anchors.len() != self.bank.len() {
            return Err(Error::InvalidInput("one anchor per operating point is required".into()));
        }
        let mut out = Vec::with_capacity(self.hypotheses.len());
        for (hyp, row) in self.hypotheses.iter().zip(self.filters.iter_mut()) {
            let mut mode_out = Vec::with_capacity(anchors.len());
            for (i, (f, anchor)) in row.iter_mut().zip(anchors).enumerate() {
                let m = &self.bank.models[i];
                if f.faulted {
                    mode_out.push(FilterOutput { gamma: Vec5::zeros(), s: m.s, log_likelihood: f64::NEG_INFINITY });
                    continue;
                }
                let gamma = y - (m.c * f.deviation + anchor.y + hyp.offset);
                if !gamma.iter().all(|v| v.is_finite()) {
                    f.faulted = true;
                    mode_out.push(FilterOutput { gamma: Vec5::zeros(), s: m.s, log_likelihood: f64::NEG_INFINITY });
                    continue;
                }
                if self.gain_mode == GainMode::Online {
                    let s = symmetrize(&(m.c * f.p * m.c.transpose() + self.bank.r));
                    let factor = CovFactor::new(&s)?;
                    let apct = m.a * f.p * m.c.transpose();
                    let k = apct * factor.inverse();
                    f.deviation = m.a * f.deviation + anchor.drive + k * gamma;
                    f.p = symmetrize(&(m.a * f.p * m.a.transpose() - k * apct.transpose() + self.bank.q));
                    mode_out.push(FilterOutput { gamma, s, log_likelihood: log_likelihood(&gamma, &factor) });
                    continue;
                }
                f.deviation = m.a * f.deviation + anchor.drive + m.k * gamma;
                let (s, ll) = match self.cov_mode {
                    CovarianceMode::Stationary => (m.s, log_likelihood(&gamma, &self.stationary[i])),
                    CovarianceMode::Empirical { forgetting, warmup } => {
                        f.second_moment = f.second_moment * forgetting + gamma * gamma.transpose() * (1.0 - forgetting);
                        f.seen += 1;
                        let empirical = if f.seen >= warmup { CovFactor::new(&f.second_moment).ok() } else { None };
                        match empirical {
                            Some(factor) => (f.second_moment, log_likelihood(&gamma, &factor)),
                            None => (m.s, log_likelihood(&gamma, &self.stationary[i])),
                        }
                    }
                };
                mode_out.push(FilterOutput { gamma, s, log_likelihood: ll });
            }
            if mode_out.iter().all(|o| o.log_likelihood == f64::NEG_INFINITY) {
                return Err(Error::non_finite("every filter of a sensor mode produced a non-finite residual"));
            }
            out.push(mode_out);
        }
        Ok(out)
    }
}

/// Which anchor the piecewise-linear filters are built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    /// OBEM trajectory (hybrid filter).
    Obem,
    /// Fixed trim values of each operating point with `B du` forcing (plain linear filter).
    Steady,
}

/// Filter bank plus per-mode weight recursion and fusion, producing one fused residual per mode.
#[derive(Debug, Clone)]
pub struct PwlSource {
    filters: FilterBank,
    anchor: AnchorKind,
    weight_cfg: WeightConfig,
    /// `[mode][point]`
    weights: Vec<Vec<f64>>,
    dt: f64,
}

impl PwlSource {
    pub fn new(filters: FilterBank, anchor: AnchorKind, weight_cfg: WeightConfig) -> Result<Self> {
        weight_cfg.validate(filters.bank().len())?;
        let dt = filters.bank().dt;
        let weights = vec![uniform(filters.bank().len()); filters.modes()];
        Ok(Self { filters, anchor, weight_cfg, weights, dt })
    }

    pub fn filters(&self) -> &FilterBank {
        &self.filters
    }

    /// Current fusion weights of one mode.
    pub fn weights(&self, mode: usize) -> &[f64] {
        &self.weights[mode]
    }

    fn anchors(&self, sample: &Sample) -> Vec<Anchor> {
        match self.anchor {
            AnchorKind::Obem => obem_anchors(&sample.y_obem, self.filters.bank().len()),
            AnchorKind::Steady => {
                let u = self.filters.bank().scaling.u(sample.fuel_flow);
                self.filters
                    .bank()
                    .models
                    .iter()
                    .map(|m| Anchor { y: m.y_ss, drive: m.b * (u - m.u_ss) })
                    .collect()
            }
        }
    }

    /// One step returning the per-filter outputs and the fused residual of every mode.
    pub fn step_detailed(&mut self, sample: &Sample) -> Result<(Vec<Vec<FilterOutput>>, Vec<ModeResidual>)> {
        let anchors = self.anchors(sample);
        let outs = self.filters.step(&sample.y, &anchors)?;
        let mut fused = Vec::with_capacity(outs.len());
        for (mode, row) in outs.iter().enumerate() {
            let logs: Vec<f64> = row.iter().map(|o| o.log_likelihood).collect();
            let up = update_weights_log(&self.weights[mode], &logs, &self.weight_cfg);
            self.weights[mode] = up.weights;
            let live: Vec<f64> = row
                .iter()
                .zip(&self.weights[mode])
                .map(|(o, w)| if o.log_likelihood == f64::NEG_INFINITY { 0.0 } else { *w })
                .collect();
            let (gamma, s) = combine_residuals(&live, row.iter().map(|o| (&o.gamma, &o.s)));
            fused.push(ModeResidual { gamma, s });
        }
        Ok((outs, fused))
    }
}

impl ResidualSource for PwlSource {
    fn reset_hypotheses(&mut self, offsets: &[Vec5], seed_mode: Option<usize>) -> Result<()> {
        if let Some(m) = seed_mode {
            if m >= self.filters.modes() {
                return Err(Error::InvalidInput(format!("no mode {m} to seed from")));
            }
        }
        let hyps = offsets.iter().map(|o| Hypothesis { offset: *o }).collect();
        self.filters.reset_hypotheses(hyps, seed_mode);
        self.weights = vec![uniform(self.filters.bank().len()); offsets.len()];
        Ok(())
    }

    fn step(&mut self, sample: &Sample) -> Result<Option<Vec<ModeResidual>>> {
        self.step_detailed(sample).map(|(_, fused)| Some(fused))
    }

    fn period(&self) -> f64 {
        self.dt
    }

    fn weights(&self, mode: usize) -> Option<Vec<f64>> {
        self.weights.get(mode).cloned()
    }
}

/// Anchors of the OBEM-driven filter: every point shares the OBEM output and has no forcing.
pub fn obem_anchors(y_obem: &Vec5, points: usize) -> Vec<Anchor> {
    vec![Anchor { y: *y_obem, drive: Vec4::zeros() }; points]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn likelihood_peak_and_unit_case() {
        let s = Mat5::identity() * 2.0;
        let peak = likelihood(&Vec5::zeros(), &s).unwrap();
        assert_relative_eq!(peak, 1.0 / ((2.0 * PI).powf(2.5) * 32f64.sqrt()), epsilon = 1e-15);
        let f = likelihood(&Vec5::new(1.0, 0.0, 0.0, 0.0, 0.0), &Mat5::identity()).unwrap();
        assert_relative_eq!(f, (2.0 * PI).powf(-2.5) * (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn likelihood_decreases_along_a_ray() {
        let s = Mat5::from_fn(|i, j| if i == j { 1.0 } else { 0.2 });
        let dir = Vec5::new(0.3, -1.0, 0.5, 0.2, 0.9);
        let mut prev = f64::INFINITY;
        for t in 0..20 {
            let f = likelihood(&(dir * t as f64 * 0.5), &s).unwrap();
            assert!(f < prev || f == LIKELIHOOD_FLOOR);
            prev = f;
        }
        assert_eq!(likelihood(&(dir * 1e3), &s).unwrap(), LIKELIHOOD_FLOOR);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        assert!(matches!(likelihood(&Vec5::zeros(), &Mat5::zeros()), Err(Error::SingularCovariance)));
    }

    #[test]
    fn hypothesis_sets() {
        let h = Hypothesis::single_fault_set(0.03);
        assert_eq!(h.len(), 6);
        assert_eq!(h[0].offset, Vec5::zeros());
        for (j, hyp) in h.iter().enumerate().skip(1) {
            assert_eq!(hyp.offset.norm(), 0.03);
            assert_eq!(hyp.offset[j - 1], 0.03);
        }
    }
}
