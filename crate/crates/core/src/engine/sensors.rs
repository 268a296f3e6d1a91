use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AmbientCondition, Engine, EngineState, HealthFactors, SensorVector};
use crate::error::{Error, Result};
use crate::linalg::Vec5;

/// Measurement and ambient process noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Measurement noise SD per sensor, percent of the cruise output.
    pub sd_v: [f64; 5],
    /// Ambient temperature/pressure noise SD, percent of standard conditions.
    pub sd_zeta: [f64; 2],
    /// Multiplier applied to `sd_v` (noise-robustness sweeps).
    pub scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sd_v: [0.23, 0.164, 0.051, 0.097, 0.164], sd_zeta: [0.01, 0.01], scale: 1.0 }
    }
}

impl NoiseSpec {
    pub fn silent() -> Self {
        Self { sd_v: [0.0; 5], sd_zeta: [0.0; 2], scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sd_v.iter().chain(&self.sd_zeta).chain([&self.scale]).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("noise standard deviations must be nonnegative".into()));
        }
        Ok(())
    }

    /// Per-channel measurement SD in sensor units given the cruise outputs.
    pub fn measurement_sd(&self, cruise_outputs: &Vec5) -> Vec5 {
        Vec5::from_fn(|i, _| self.scale * self.sd_v[i] * cruise_outputs[i].abs() / 100.0)
    }
}

/// A sensor bias that switches on at `onset` and stays on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    /// Sensor number, 1..=5 in the order `T_C, P_C, N, T_T, P_T`.
    pub sensor: usize,
    /// Bias in sensor units.
    pub bias: f64,
    /// Onset sample index.
    pub onset: usize,
}

impl FaultEvent {
    pub fn channel(&self) -> usize {
        self.sensor - 1
    }

    pub fn is_active(&self, k: usize) -> bool {
        k >= self.onset
    }

    /// Checks sensor numbers, single fault per sensor and onset spacing.
    pub fn validate_set(events: &[FaultEvent], min_interval: usize) -> Result<()> {
        for (i, e) in events.iter().enumerate() {
            if !(1..=5).contains(&e.sensor) {
                return Err(Error::Validation(format!("fault sensor {} outside 1..=5", e.sensor)));
            }
            if !e.bias.is_finite() {
                return Err(Error::Validation("fault bias must be finite".into()));
            }
            for other in &events[i + 1..] {
                if other.sensor == e.sensor {
                    return Err(Error::Validation(format!("two faults on sensor {}", e.sensor)));
                }
                if other.onset.abs_diff(e.onset) < min_interval {
                    return Err(Error::Validation(format!(
                        "fault onsets {} and {} closer than {min_interval} samples",
                        e.onset, other.onset
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Seeded Gaussian noise source for one simulated engine.
#[derive(Debug, Clone)]
pub struct SensorNoise {
    rng: ChaCha8Rng,
    measurement_sd: Vec5,
    ambient_sd: [f64; 2],
}

impl SensorNoise {
    pub fn new(spec: &NoiseSpec, cruise_outputs: &Vec5, t_std: f64, p_std: f64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            measurement_sd: spec.measurement_sd(cruise_outputs),
            ambient_sd: [spec.sd_zeta[0] * t_std / 100.0, spec.sd_zeta[1] * p_std / 100.0],
        }
    }

    pub fn measurement_sd(&self) -> &Vec5 {
        &self.measurement_sd
    }

    pub fn measurement(&mut self) -> Vec5 {
        let mut v = Vec5::zeros();
        for i in 0..5 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            v[i] = z * self.measurement_sd[i];
        }
        v
    }

    /// Perturbation `(dT_amb, dP_amb)` for one sample.
    pub fn ambient(&mut self) -> (f64, f64) {
        let zt: f64 = StandardNormal.sample(&mut self.rng);
        let zp: f64 = StandardNormal.sample(&mut self.rng);
        (zt * self.ambient_sd[0], zp * self.ambient_sd[1])
    }
}

impl Engine {
    /// Noise-free cruise (design point) sensor outputs.
    pub fn design_outputs(&self) -> Vec5 {
        self.outputs(&self.design_state(), &HealthFactors::healthy(), &self.design_ambient())
            .expect("design point outputs are finite by construction")
    }

    /// Sensor reading at sample `k`: `G(X, H) + sum of active biases + noise`.
    pub fn measure(
        &self,
        x: &EngineState,
        h: &HealthFactors,
        amb: &AmbientCondition,
        faults: &[FaultEvent],
        k: usize,
        noise: Option<&mut SensorNoise>,
    ) -> Result<SensorVector> {
        let mut y = self.outputs(x, h, amb)?;
        y += fault_offsets(faults, k);
        if let Some(n) = noise {
            y += n.measurement();
        }
        Ok(SensorVector::from_vector(&y))
    }
}

/// `sum_s b_s z_s step(k - k_fs)`
pub fn fault_offsets(faults: &[FaultEvent], k: usize) -> Vec5 {
    let mut v = Vec5::zeros();
    for f in faults.iter().filter(|f| f.is_active(k)) {
        v[f.channel()] += f.bias;
    }
    v
}
