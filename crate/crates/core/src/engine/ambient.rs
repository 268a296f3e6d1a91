use serde::{Deserialize, Serialize};

use super::EngineConstants;

const FT_TO_M: f64 = 0.3048;

/// Flight condition and the ambient temperature/pressure derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientCondition {
    pub altitude_ft: f64,
    pub mach: f64,
    /// [K]
    pub t_amb: f64,
    /// [bar]
    pub p_amb: f64,
}

impl AmbientCondition {
    pub fn new(altitude_ft: f64, mach: f64, k: &EngineConstants) -> Self {
        let (t_amb, p_amb) = ambient(altitude_ft, k);
        Self { altitude_ft, mach, t_amb, p_amb }
    }

    /// Same flight condition with additive perturbations on the ambient temperature and pressure.
    pub fn perturbed(&self, dt: f64, dp: f64) -> Self {
        Self { t_amb: self.t_amb + dt, p_amb: self.p_amb + dp, ..*self }
    }
}

/// Standard lapse-rate temperature and barometric pressure at `altitude_ft`.
///
/// The altitude is converted to metres before both formulas; the pressure exponent uses the
/// molar mass of air.
pub fn ambient(altitude_ft: f64, k: &EngineConstants) -> (f64, f64) {
    let alt_m = altitude_ft * FT_TO_M;
    let t = k.t_std - 6.5 * alt_m / 1000.0;
    let p = k.p_std * (-k.g * k.molar_mass_air * alt_m / (288.0 * k.r_univ)).exp();
    (t, p)
}

/// Total temperature and pressure at the compressor face after isentropic ram recovery.
pub fn ram_conditions(amb: &AmbientCondition, gamma: f64) -> (f64, f64) {
    let ratio = 1.0 + 0.5 * (gamma - 1.0) * amb.mach * amb.mach;
    (amb.t_amb * ratio, amb.p_amb * ratio.powf(gamma / (gamma - 1.0)))
}
