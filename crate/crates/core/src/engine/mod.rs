//! Nonlinear single-spool turbojet: gas-path dynamics, ambient algebra, sensors and
//! flight-profile playback.
//!
//! States are `[P_cc (bar), N (rpm), T_cc (K), P_t (bar)]` and the five sensors read
//! `[T_c (K), P_c (bar), N (rpm), T_t (K), P_t (bar)]`.

mod ambient;
mod config;
mod maps;
mod model;
mod profile;
mod sensors;

pub use ambient::{ambient, ram_conditions, AmbientCondition};
pub use config::{DesignPoint, EngineConfig, EngineConstants, MapCoefficients};
pub use maps::{MapOutputs, PerformanceMaps};
pub use model::{Engine, TrimOptions};
pub use profile::{FlightProfile, ProfileSample};
pub use sensors::{fault_offsets, FaultEvent, NoiseSpec, SensorNoise};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Vec4, Vec5};

/// Sensor channel names in measurement order.
pub const SENSOR_NAMES: [&str; 5] = ["T_C", "P_C", "N", "T_T", "P_T"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    /// Combustion chamber pressure [bar].
    pub p_cc: f64,
    /// Spool speed [rpm].
    pub n: f64,
    /// Combustion chamber temperature [K].
    pub t_cc: f64,
    /// Turbine exit pressure [bar].
    pub p_t: f64,
}

impl EngineState {
    pub fn new(p_cc: f64, n: f64, t_cc: f64, p_t: f64) -> Self {
        Self { p_cc, n, t_cc, p_t }
    }

    pub fn from_vector(v: &Vec4) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vec4 {
        Vec4::new(self.p_cc, self.n, self.t_cc, self.p_t)
    }

    pub fn is_valid(&self) -> bool {
        let v = self.to_vector();
        v.iter().all(|x| x.is_finite() && *x > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("engine state must be finite and positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorVector {
    pub t_c: f64,
    pub p_c: f64,
    pub n: f64,
    pub t_t: f64,
    pub p_t: f64,
}

impl SensorVector {
    pub fn from_vector(v: &Vec5) -> Self {
        Self { t_c: v[0], p_c: v[1], n: v[2], t_t: v[3], p_t: v[4] }
    }

    pub fn to_vector(&self) -> Vec5 {
        Vec5::new(self.t_c, self.p_c, self.n, self.t_t, self.p_t)
    }
}

/// Multiplicative degradation factors on the compressor/turbine efficiencies and flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthFactors {
    pub eta_c: f64,
    pub eta_t: f64,
    pub mdot_c: f64,
    pub mdot_t: f64,
}

impl Default for HealthFactors {
    fn default() -> Self {
        Self::healthy()
    }
}

impl HealthFactors {
    pub const fn healthy() -> Self {
        Self { eta_c: 1.0, eta_t: 1.0, mdot_c: 1.0, mdot_t: 1.0 }
    }

    pub fn new(eta_c: f64, eta_t: f64, mdot_c: f64, mdot_t: f64) -> Self {
        Self { eta_c, eta_t, mdot_c, mdot_t }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.eta_c, self.eta_t, self.mdot_c, self.mdot_t]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["eta_c", "eta_t", "mdot_c", "mdot_t"].iter().zip(self.as_array()) {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "health factor {name} = {v} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Reference-baseline estimation error in percent, per factor: `100 |l - l_hat| / l`.
    pub fn rbee_percent(&self, estimate: &HealthFactors) -> [f64; 4] {
        let a = self.as_array();
        let b = estimate.as_array();
        [0, 1, 2, 3].map(|i| 100.0 * (a[i] - b[i]).abs() / a[i])
    }
}
