use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermodynamic and mechanical constants of the engine.
///
/// The defaults describe a small single-spool turbojet; they are physically plausible
/// values, not data for any particular engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConstants {
    /// [J/(kg K)]
    pub cp: f64,
    /// [J/(kg K)]
    pub cv: f64,
    /// Fuel lower heating value [J/kg].
    pub hu: f64,
    pub eta_cc: f64,
    pub eta_m: f64,
    /// Rotor polar inertia [kg m^2].
    pub inertia: f64,
    /// Combustor volume [m^3].
    pub v_cc: f64,
    /// Mixer / jet-pipe volume [m^3].
    pub v_m: f64,
    /// Gas mass held in the combustor [kg].
    pub m_cc: f64,
    pub bypass_ratio: f64,
    /// Standard sea-level temperature [K].
    pub t_std: f64,
    /// Standard sea-level pressure [bar].
    pub p_std: f64,
    /// Universal gas constant [J/(mol K)].
    pub r_univ: f64,
    /// [m/s^2]
    pub g: f64,
    /// Molar mass of air [kg/mol].
    pub molar_mass_air: f64,
}

impl Default for EngineConstants {
    fn default() -> Self {
        Self {
            cp: 1004.5,
            cv: 717.5,
            hu: 43.0e6,
            eta_cc: 0.98,
            eta_m: 0.99,
            inertia: 2.0,
            v_cc: 0.15,
            v_m: 0.25,
            m_cc: 0.22,
            bypass_ratio: 0.05,
            t_std: 288.0,
            p_std: 1.01325,
            r_univ: 8.31447,
            g: 9.80665,
            molar_mass_air: 0.0289644,
        }
    }
}

impl EngineConstants {
    pub fn gamma(&self) -> f64 {
        self.cp / self.cv
    }

    /// Specific gas constant [J/(kg K)].
    pub fn r_gas(&self) -> f64 {
        self.cp - self.cv
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cp", self.cp),
            ("cv", self.cv),
            ("hu", self.hu),
            ("eta_cc", self.eta_cc),
            ("eta_m", self.eta_m),
            ("inertia", self.inertia),
            ("v_cc", self.v_cc),
            ("v_m", self.v_m),
            ("m_cc", self.m_cc),
            ("t_std", self.t_std),
            ("p_std", self.p_std),
            ("r_univ", self.r_univ),
            ("g", self.g),
            ("molar_mass_air", self.molar_mass_air),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("constant {name} must be positive, got {v}")));
            }
        }
        if self.cp <= self.cv {
            return Err(Error::InvalidInput("cp must exceed cv".into()));
        }
        if !(self.bypass_ratio >= 0.0) {
            return Err(Error::InvalidInput("bypass_ratio must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Calibration anchor of the performance maps. The engine is calibrated so that this
/// flight condition and fuel flow is an exact equilibrium with the given spool speed,
/// compressor pressure ratio, efficiencies and air flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignPoint {
    pub fuel_flow: f64,
    pub altitude_ft: f64,
    pub mach: f64,
    pub spool_speed: f64,
    pub pressure_ratio: f64,
    pub eta_c: f64,
    pub eta_t: f64,
    /// Compressor air mass flow [kg/s].
    pub air_flow: f64,
}

impl Default for DesignPoint {
    fn default() -> Self {
        Self {
            fuel_flow: 0.25,
            altitude_ft: 16404.2,
            mach: 0.85,
            spool_speed: 15000.0,
            pressure_ratio: 6.0,
            eta_c: 0.82,
            eta_t: 0.87,
            air_flow: 14.0,
        }
    }
}

/// Quadratic map shapes in normalized corrected speed `n` and normalized pressure ratio `p`
/// (both equal to one at the anchor). Each map is `anchor * (1 + poly(n - 1, p - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapCoefficients {
    /// Compressor corrected flow: `[n, n^2, p, p^2, n p]`.
    pub compressor_flow: [f64; 5],
    /// Compressor efficiency: `[n, n^2, p, p^2, n p]`.
    pub compressor_eff: [f64; 5],
    /// Turbine flow parameter: `[n, n^2, p, p^2, n p]`.
    pub turbine_flow: [f64; 5],
    /// Turbine efficiency: `[n, n^2, p, p^2, n p]`.
    pub turbine_eff: [f64; 5],
    /// Normalized-coordinate box outside which map evaluations are flagged.
    pub envelope_half_width: f64,
}

impl Default for MapCoefficients {
    fn default() -> Self {
        Self {
            compressor_flow: [1.6, -0.4, -0.35, -0.3, 0.0],
            compressor_eff: [0.05, -0.6, 0.02, -0.5, 0.0],
            turbine_flow: [0.0, 0.0, 0.08, -0.1, 0.0],
            turbine_eff: [0.02, -0.4, 0.02, -0.3, 0.0],
            envelope_half_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub constants: EngineConstants,
    pub design: DesignPoint,
    pub maps: MapCoefficients,
}
