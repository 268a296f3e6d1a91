use serde::{Deserialize, Serialize};

use super::{EngineState, MapCoefficients};

/// Map outputs before health degradation is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOutputs {
    pub eta_c: f64,
    pub eta_t: f64,
    /// Compressor mass flow [kg/s].
    pub mdot_c: f64,
    /// Turbine mass flow [kg/s].
    pub mdot_t: f64,
    /// False when any normalized map coordinate left the calibration envelope.
    pub in_envelope: bool,
}

/// Compressor and turbine maps calibrated to an anchor point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMaps {
    pub coefficients: MapCoefficients,
    /// Corrected compressor speed at the anchor [rpm].
    pub nc_anchor: f64,
    pub prc_anchor: f64,
    /// Corrected compressor flow at the anchor [kg/s].
    pub mc_anchor: f64,
    pub eta_c_anchor: f64,
    /// Corrected turbine speed `N / sqrt(T_cc / T_std)` at the anchor.
    pub nt_anchor: f64,
    /// Turbine expansion ratio `P_cc / P_t` at the anchor.
    pub prt_anchor: f64,
    /// Turbine flow parameter `mdot sqrt(T_cc/T_std) / (P_cc/P_std)` at the anchor.
    pub mt_anchor: f64,
    pub eta_t_anchor: f64,
    pub t_std: f64,
    pub p_std: f64,
}

/// `1 + c0 dn + c1 dn^2 + c2 dp + c3 dp^2 + c4 dn dp`
pub(crate) fn shape(c: &[f64; 5], dn: f64, dp: f64) -> f64 {
    1.0 + c[0] * dn + c[1] * dn * dn + c[2] * dp + c[3] * dp * dp + c[4] * dn * dp
}

impl PerformanceMaps {
    /// Normalized compressor and turbine map coordinates `(dn_c, dp_c, dn_t, dp_t)`.
    pub fn coordinates(&self, x: &EngineState, t_d: f64, p_d: f64) -> (f64, f64, f64, f64) {
        let nc = x.n / (t_d / self.t_std).sqrt();
        let prc = x.p_cc / p_d;
        let nt = x.n / (x.t_cc / self.t_std).sqrt();
        let prt = x.p_cc / x.p_t;
        (
            nc / self.nc_anchor - 1.0,
            prc / self.prc_anchor - 1.0,
            nt / self.nt_anchor - 1.0,
            prt / self.prt_anchor - 1.0,
        )
    }

    pub fn evaluate(&self, x: &EngineState, t_d: f64, p_d: f64) -> MapOutputs {
        let c = &self.coefficients;
        let (dnc, dpc, dnt, dpt) = self.coordinates(x, t_d, p_d);
        let theta_d = t_d / self.t_std;
        let delta_d = p_d / self.p_std;
        let mdot_c = self.mc_anchor * shape(&c.compressor_flow, dnc, dpc) * delta_d / theta_d.sqrt();
        let eta_c = self.eta_c_anchor * shape(&c.compressor_eff, dnc, dpc);
        let mdot_t = self.mt_anchor * shape(&c.turbine_flow, dnt, dpt) * (x.p_cc / self.p_std)
            / (x.t_cc / self.t_std).sqrt();
        let eta_t = self.eta_t_anchor * shape(&c.turbine_eff, dnt, dpt);
        let w = c.envelope_half_width;
        let in_envelope = [dnc, dpc, dnt, dpt].iter().all(|d| d.abs() <= w)
            && eta_c > 0.0
            && eta_c <= 1.0
            && eta_t > 0.0
            && eta_t <= 1.0;
        MapOutputs { eta_c, eta_t, mdot_c, mdot_t, in_envelope }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_is_one_at_anchor() {
        let c = MapCoefficients::default();
        for coefs in [c.compressor_flow, c.compressor_eff, c.turbine_flow, c.turbine_eff] {
            assert_eq!(shape(&coefs, 0.0, 0.0), 1.0);
        }
    }
}
