//! Multiple-model decision layer: sensor-mode probabilities, persistent argmax isolation and the
//! two-level scheme for a second concurrent fault.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::SENSOR_NAMES;
use crate::error::{Error, Result};
use crate::fusion::WeightConfig;
use crate::hkf::CovarianceMode;
use crate::linalg::{CovFactor, Mat5, Vec5};

/// Decision-layer and hypothesis-bank settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosisConfig {
    /// Pre-determined hypothesis bias, percent of the cruise output.
    pub bias_pct: f64,
    pub weights: WeightConfig,
    /// Floor on each mode probability.
    pub mode_floor: f64,
    /// Time the argmax must stay on one fault mode before it is declared [s].
    pub persistence_s: f64,
    /// Minimum spacing between injected faults accepted by scenario validation [s].
    pub min_fault_interval_s: f64,
    /// Multiplier of `bias_pct` for the second-level same-sensor hypothesis.
    pub larger_bias_factor: f64,
    pub covariance: CovarianceMode,
    /// Escalate to the concurrent-fault bank after the first isolation.
    pub hierarchical: bool,
    /// Severity-estimation window after detection [samples].
    pub glr_window: usize,
    /// Level-1 mode probabilities at session start.
    pub initial_probs: InitialProbs,
}

/// Starting point of the level-1 probability recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProbs {
    /// Every fault mode starts at the probability floor; the engine is assumed healthy.
    #[default]
    Healthy,
    Uniform,
}

/// Smallest starting probability of a fault mode, so that the recursion can lift it.
const MIN_PRIOR: f64 = 1e-6;

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            bias_pct: 3.0,
            weights: WeightConfig::default(),
            mode_floor: 1e-4,
            persistence_s: 0.05,
            min_fault_interval_s: 10.0,
            larger_bias_factor: 2.0,
            covariance: CovarianceMode::Stationary,
            hierarchical: true,
            glr_window: 200,
            initial_probs: InitialProbs::Healthy,
        }
    }
}

impl DiagnosisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bias_pct > 0.0
            && self.mode_floor >= 0.0
            && self.mode_floor * 6.0 <= 1.0
            && self.persistence_s >= 0.0
            && self.min_fault_interval_s >= 0.0
            && self.larger_bias_factor > 1.0
            && self.glr_window > 0)
        {
            return Err(Error::InvalidInput("diagnosis settings out of range".into()));
        }
        self.weights.validate(1)
    }

    /// Hypothesis bias in normalized units.
    pub fn bias(&self) -> f64 {
        self.bias_pct / 100.0
    }

    /// Level-1 probabilities at session start.
    pub fn level1_prior(&self) -> Vec<f64> {
        match self.initial_probs {
            InitialProbs::Uniform => vec![1.0 / 6.0; 6],
            InitialProbs::Healthy => {
                let f = self.mode_floor.max(MIN_PRIOR);
                let mut p = vec![f; 6];
                p[0] = 1.0 - 5.0 * f;
                p
            }
        }
    }

    /// Persistence in samples of a decision stream with period `dt` (at least one).
    pub fn persistence_samples(&self, dt: f64) -> usize {
        ((self.persistence_s / dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Fused residual and covariance of one sensor mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeResidual {
    pub gamma: Vec5,
    pub s: Mat5,
}

/// `ln` of the Gaussian density of a fused residual.
pub fn mode_log_density(gamma: &Vec5, s: &Mat5) -> Result<f64> {
    let f = CovFactor::new(s)?;
    Ok(-0.5 * (5.0 * (2.0 * PI).ln() + f.log_det() + f.mahalanobis(gamma)))
}

/// Gaussian density of a fused residual (may underflow to zero).
pub fn mode_density(gamma: &Vec5, s: &Mat5) -> Result<f64> {
    mode_log_density(gamma, s).map(f64::exp)
}

/// Result of one probability update.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityUpdate {
    pub probs: Vec<f64>,
    pub degenerate: bool,
}

/// Bayes recursion over sensor modes from log densities, floored at `floor`, renormalized.
pub fn update_mode_probs_log(prev: &[f64], log_densities: &[f64], floor: f64) -> ProbabilityUpdate {
    let up = crate::fusion::update_weights_log(prev, log_densities, &WeightConfig { floor, renormalize: true });
    ProbabilityUpdate { probs: up.weights, degenerate: up.degenerate }
}

/// Bayes recursion over sensor modes from plain densities.
pub fn update_mode_probs(prev: &[f64], densities: &[f64], floor: f64) -> ProbabilityUpdate {
    let logs: Vec<f64> = densities.iter().map(|d| d.ln()).collect();
    update_mode_probs_log(prev, &logs, floor)
}

/// Index of the largest entry; ties resolve to the lower index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// A persistent argmax on a non-base mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declaration {
    pub mode: usize,
    /// First sample of the persistent run.
    pub k_ds: usize,
}

/// Debounces the argmax: a mode other than 0 is declared once it has been the argmax for
/// `persistence` consecutive decision samples.
#[derive(Debug, Clone)]
pub struct Decider {
    persistence: usize,
    run_mode: usize,
    run_start: usize,
    run_len: usize,
    declared: Option<usize>,
}

impl Decider {
    pub fn new(persistence: usize) -> Self {
        Self { persistence: persistence.max(1), run_mode: 0, run_start: 0, run_len: 0, declared: None }
    }

    pub fn decide(&mut self, p: &[f64], k: usize) -> Option<Declaration> {
        let m = argmax(p);
        if m == 0 {
            self.run_mode = 0;
            self.run_len = 0;
            return None;
        }
        if m == self.run_mode {
            self.run_len += 1;
        } else {
            self.run_mode = m;
            self.run_start = k;
            self.run_len = 1;
        }
        if self.run_len == self.persistence && self.declared != Some(m) {
            self.declared = Some(m);
            return Some(Declaration { mode: m, k_ds: self.run_start });
        }
        None
    }
}

/// Second-level hypothesis roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "channel")]
pub enum Level2Mode {
    /// The isolated first fault at the pre-determined bias.
    Same,
    /// A larger bias on the same sensor.
    Larger,
    /// The first fault plus a bias on another channel (0-based).
    Pair(usize),
}

/// Second-level bank composition after a first isolation on `first_channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyPlan {
    pub first_channel: usize,
    pub modes: Vec<Level2Mode>,
    pub offsets: Vec<Vec5>,
}

impl HierarchyPlan {
    pub fn new(first_channel: usize, bias: f64, larger_factor: f64) -> Self {
        let mut base = Vec5::zeros();
        base[first_channel] = bias;
        let mut modes = vec![Level2Mode::Same, Level2Mode::Larger];
        let mut offsets = vec![base, base * larger_factor];
        for t in (0..5).filter(|t| *t != first_channel) {
            modes.push(Level2Mode::Pair(t));
            let mut o = base;
            o[t] = bias;
            offsets.push(o);
        }
        Self { first_channel, modes, offsets }
    }
}

/// One isolated sensor fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Isolation {
    /// Sensor number 1..=5.
    pub sensor: usize,
    pub k_ds: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Status {
    Healthy,
    Isolated { fault: Isolation },
    ConcurrentIsolated { first: Isolation, second: Isolation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Isolated,
    Escalated,
    LargerBias,
    Concurrent,
    Degenerate,
}

/// Diagnosis log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisEvent {
    pub k: usize,
    pub level: u8,
    pub event: EventKind,
    pub mode: usize,
    /// Sensor name, when the event names one.
    pub sensor: Option<String>,
    pub k_ds: Option<usize>,
    pub probs: Vec<f64>,
}

/// Request to swap the hypothesis set of the residual source.
#[derive(Debug, Clone, PartialEq)]
pub struct Escalation {
    /// Normalized output offsets of the new hypotheses.
    pub offsets: Vec<Vec5>,
    /// Mode whose filter states seed every new filter.
    pub seed_mode: usize,
}

/// Probability recursion, declaration logic and escalation for one diagnosis session.
#[derive(Debug, Clone)]
pub struct DecisionLayer {
    cfg: DiagnosisConfig,
    persistence: usize,
    probs: Vec<f64>,
    decider: Decider,
    level: u8,
    plan: Option<HierarchyPlan>,
    status: Status,
    events: Vec<DiagnosisEvent>,
    degenerate_steps: usize,
}

impl DecisionLayer {
    /// `dt` is the period of the residual stream feeding [`DecisionLayer::observe`].
    pub fn new(cfg: DiagnosisConfig, dt: f64) -> Self {
        let persistence = cfg.persistence_samples(dt);
        Self {
            probs: cfg.level1_prior(),
            cfg,
            persistence,
            decider: Decider::new(persistence),
            level: 1,
            plan: None,
            status: Status::Healthy,
            events: Vec::new(),
            degenerate_steps: 0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn events(&self) -> &[DiagnosisEvent] {
        &self.events
    }

    pub fn plan(&self) -> Option<&HierarchyPlan> {
        self.plan.as_ref()
    }

    pub fn degenerate_steps(&self) -> usize {
        self.degenerate_steps
    }

    /// Level-1 hypothesis offsets: healthy plus one bias per sensor.
    pub fn level1_offsets(&self) -> Vec<Vec5> {
        std::iter::once(Vec5::zeros())
            .chain((0..5).map(|c| {
                let mut o = Vec5::zeros();
                o[c] = self.cfg.bias();
                o
            }))
            .collect()
    }

    fn push(&mut self, k: usize, event: EventKind, mode: usize, sensor: Option<usize>, k_ds: Option<usize>) {
        self.events.push(DiagnosisEvent {
            k,
            level: self.level,
            event,
            mode,
            sensor: sensor.map(|s| SENSOR_NAMES[s].to_string()),
            k_ds,
            probs: self.probs.clone(),
        });
    }

    /// Escalates to the second level after a first isolation on `channel`.
    pub fn escalate(&mut self, channel: usize, k: usize) -> Result<Escalation> {
        if self.level == 2 {
            return Err(Error::InvalidInput("only two concurrent faults are supported".into()));
        }
        let plan = HierarchyPlan::new(channel, self.cfg.bias(), self.cfg.larger_bias_factor);
        let offsets = plan.offsets.clone();
        self.level = 2;
        self.plan = Some(plan);
        self.probs = vec![1.0 / offsets.len() as f64; offsets.len()];
        self.decider = Decider::new(self.persistence);
        self.push(k, EventKind::Escalated, 0, Some(channel), None);
        Ok(Escalation { offsets, seed_mode: channel + 1 })
    }

    /// Consumes one set of fused per-mode residuals at plant sample `k`.
    pub fn observe(&mut self, k: usize, residuals: &[ModeResidual]) -> Result<Option<Escalation>> {
        if residuals.len() != self.probs.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} mode residuals, got {}",
                self.probs.len(),
                residuals.len()
            )));
        }
        let logs = residuals.iter().map(|r| mode_log_density(&r.gamma, &r.s)).collect::<Result<Vec<_>>>()?;
        let up = update_mode_probs_log(&self.probs, &logs, self.cfg.mode_floor);
        self.probs = up.probs;
        if up.degenerate {
            self.degenerate_steps += 1;
            if self.degenerate_steps == 1 {
                self.push(k, EventKind::Degenerate, 0, None, None);
            }
        }
        let Some(dec) = self.decider.decide(&self.probs, k) else {
            return Ok(None);
        };
        if self.level == 1 {
            let channel = dec.mode - 1;
            let fault = Isolation { sensor: dec.mode, k_ds: dec.k_ds };
            self.status = Status::Isolated { fault };
            self.push(k, EventKind::Isolated, dec.mode, Some(channel), Some(dec.k_ds));
            if self.cfg.hierarchical {
                return self.escalate(channel, k).map(Some);
            }
            return Ok(None);
        }
        let plan = self.plan.as_ref().expect("level 2 has a plan");
        match plan.modes[dec.mode] {
            Level2Mode::Same => {}
            Level2Mode::Larger => {
                let ch = plan.first_channel;
                self.push(k, EventKind::LargerBias, dec.mode, Some(ch), Some(dec.k_ds));
            }
            Level2Mode::Pair(t) => {
                let first = match &self.status {
                    Status::Isolated { fault } => *fault,
                    Status::ConcurrentIsolated { first, .. } => *first,
                    Status::Healthy => unreachable!("level 2 follows an isolation"),
                };
                let second = Isolation { sensor: t + 1, k_ds: dec.k_ds };
                self.status = Status::ConcurrentIsolated { first, second };
                self.push(k, EventKind::Concurrent, dec.mode, Some(t), Some(dec.k_ds));
            }
        }
        Ok(None)
    }
}

/// One plant sample as seen by a residual source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub k: usize,
    /// Normalized sensor readings.
    pub y: Vec5,
    /// Normalized OBEM outputs (nominal ambient, estimated health).
    pub y_obem: Vec5,
    /// Fuel flow [kg/s].
    pub fuel_flow: f64,
    /// Noise-free ambient condition.
    pub ambient: crate::engine::AmbientCondition,
}

/// Source of per-mode fused residuals (hybrid/linear filter banks or nonlinear baselines).
pub trait ResidualSource: Send {
    /// Replaces the hypothesis set; new filters start from the state of `seed_mode`.
    fn reset_hypotheses(&mut self, offsets: &[Vec5], seed_mode: Option<usize>) -> Result<()>;

    /// Processes one plant sample; returns `None` on samples where the source does not update.
    fn step(&mut self, sample: &Sample) -> Result<Option<Vec<ModeResidual>>>;

    /// Period of the produced residual stream [s].
    fn period(&self) -> f64;

    /// Replaces the health baselines of the internal nonlinear model, when there is one.
    fn update_baseline(&mut self, _health: &crate::engine::HealthFactors) -> Result<()> {
        Ok(())
    }

    /// Fusion weights of one mode, for sources that fuse several operating points.
    fn weights(&self, _mode: usize) -> Option<Vec<f64>> {
        None
    }
}
