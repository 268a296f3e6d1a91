use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};

use super::maps::PerformanceMaps;
use super::{ram_conditions, AmbientCondition, EngineConfig, EngineState, HealthFactors, MapOutputs};
use crate::error::{Error, Result};
use crate::linalg::{Vec4, Vec5};

const BAR: f64 = 1.0e5;

/// Newton settings for [`Engine::trim`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimOptions {
    pub max_iterations: usize,
    /// Bound on the state-scaled derivative norm `|dx_i / x_i|` [1/s].
    pub tolerance: f64,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self { max_iterations: 60, tolerance: 1e-9 }
    }
}

/// Calibrated single-spool turbojet model.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    maps: PerformanceMaps,
    /// Effective convergent nozzle throat area [m^2].
    nozzle_area: f64,
    design_state: EngineState,
}

/// Intermediate gas-path quantities at one state.
#[derive(Debug, Clone, Copy)]
struct GasPath {
    t_d: f64,
    t_c: f64,
    t_t: f64,
    mdot_c: f64,
    mdot_t: f64,
    mdot_n: f64,
}

impl Engine {
    /// Builds the engine and calibrates map anchors, turbine capacity and nozzle area so that
    /// the configured design point is an exact equilibrium of the healthy engine.
    pub fn new(config: EngineConfig) -> Result<Self> {
        let k = &config.constants;
        k.validate()?;
        let d = &config.design;
        let g = k.gamma();
        let e = (g - 1.0) / g;
        if !(d.pressure_ratio > 1.0 && d.eta_c > 0.0 && d.eta_c <= 1.0 && d.eta_t > 0.0 && d.eta_t <= 1.0)
        {
            return Err(Error::InvalidInput("design point efficiencies/pressure ratio out of range".into()));
        }
        let amb = AmbientCondition::new(d.altitude_ft, d.mach, k);
        let (t_d, p_d) = ram_conditions(&amb, g);
        let p_cc = d.pressure_ratio * p_d;
        let t_c = t_d * (1.0 + (d.pressure_ratio.powf(e) - 1.0) / d.eta_c);
        let mc = d.air_flow;
        let mt = mc + d.fuel_flow;
        let t_cc = (k.cp * t_c * mc + k.eta_cc * k.hu * d.fuel_flow) / (k.cp * mt);
        let dt_turbine = mc * (t_c - t_d) / (k.eta_m * mt);
        let t_t = t_cc - dt_turbine;
        let x_exp = 1.0 - dt_turbine / (t_cc * d.eta_t);
        if !(x_exp > 0.0 && x_exp < 1.0) {
            return Err(Error::InvalidInput("design point has no feasible turbine expansion".into()));
        }
        let p_t = p_cc * x_exp.powf(1.0 / e);
        let maps = PerformanceMaps {
            coefficients: config.maps.clone(),
            nc_anchor: d.spool_speed / (t_d / k.t_std).sqrt(),
            prc_anchor: d.pressure_ratio,
            mc_anchor: mc * (t_d / k.t_std).sqrt() / (p_d / k.p_std),
            eta_c_anchor: d.eta_c,
            nt_anchor: d.spool_speed / (t_cc / k.t_std).sqrt(),
            prt_anchor: p_cc / p_t,
            mt_anchor: mt * (t_cc / k.t_std).sqrt() / (p_cc / k.p_std),
            eta_t_anchor: d.eta_t,
            t_std: k.t_std,
            p_std: k.p_std,
        };
        let beta = k.bypass_ratio;
        let mdot_n = mt + beta / (beta + 1.0) * mc;
        let unit = nozzle_flow_per_area(p_t, t_t, amb.p_amb, g, k.r_gas());
        let nozzle_area = mdot_n / unit;
        let design_state = EngineState::new(p_cc, d.spool_speed, t_cc, p_t);
        Ok(Self { config, maps, nozzle_area, design_state })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn maps(&self) -> &PerformanceMaps {
        &self.maps
    }

    pub fn nozzle_area(&self) -> f64 {
        self.nozzle_area
    }

    /// Equilibrium state at the calibration anchor.
    pub fn design_state(&self) -> EngineState {
        self.design_state
    }

    pub fn design_ambient(&self) -> AmbientCondition {
        let d = &self.config.design;
        AmbientCondition::new(d.altitude_ft, d.mach, &self.config.constants)
    }

    pub fn ambient(&self, altitude_ft: f64, mach: f64) -> AmbientCondition {
        AmbientCondition::new(altitude_ft, mach, &self.config.constants)
    }

    pub fn performance_maps(&self, x: &EngineState, amb: &AmbientCondition) -> MapOutputs {
        let (t_d, p_d) = ram_conditions(amb, self.config.constants.gamma());
        self.maps.evaluate(x, t_d, p_d)
    }

    fn gas_path(&self, x: &EngineState, h: &HealthFactors, amb: &AmbientCondition) -> Result<GasPath> {
        let k = &self.config.constants;
        let g = k.gamma();
        let e = (g - 1.0) / g;
        let (t_d, p_d) = ram_conditions(amb, g);
        let m = self.maps.evaluate(x, t_d, p_d);
        let prc = x.p_cc / p_d;
        let prt = x.p_t / x.p_cc;
        if !(prc > 0.0) {
            return Err(Error::non_finite("compressor pressure ratio P_cc/P_d"));
        }
        if !(prt > 0.0) {
            return Err(Error::non_finite("turbine pressure ratio P_t/P_cc"));
        }
        let t_c = t_d * (1.0 + (prc.powf(e) - 1.0) / (h.eta_c * m.eta_c));
        let t_t = x.t_cc * (1.0 - h.eta_t * m.eta_t * (1.0 - prt.powf(e)));
        let mdot_n =
            self.nozzle_area * nozzle_flow_per_area(x.p_t, t_t, amb.p_amb, g, k.r_gas());
        let gp = GasPath { t_d, t_c, t_t, mdot_c: h.mdot_c * m.mdot_c, mdot_t: h.mdot_t * m.mdot_t, mdot_n };
        for (name, v) in [
            ("compressor exit temperature T_C", gp.t_c),
            ("turbine exit temperature T_T", gp.t_t),
            ("compressor flow", gp.mdot_c),
            ("turbine flow", gp.mdot_t),
            ("nozzle flow", gp.mdot_n),
        ] {
            if !v.is_finite() {
                return Err(Error::non_finite(name));
            }
        }
        Ok(gp)
    }

    /// Time derivative of the state for the given health factors, fuel flow [kg/s] and ambient.
    pub fn derivatives(
        &self,
        x: &EngineState,
        h: &HealthFactors,
        fuel_flow: f64,
        amb: &AmbientCondition,
    ) -> Result<Vec4> {
        let k = &self.config.constants;
        let gp = self.gas_path(x, h, amb)?;
        let r = k.r_gas();
        let net_flow = gp.mdot_c + fuel_flow - gp.mdot_t;
        let energy = (k.cp * gp.t_c * gp.mdot_c + k.eta_cc * k.hu * fuel_flow
            - k.cp * x.t_cc * gp.mdot_t)
            - k.cv * x.t_cc * net_flow;
        let t_cc_dot = energy / (k.cv * k.m_cc);
        let p_cc_dot = x.p_cc / x.t_cc * t_cc_dot + k.gamma() * r * x.t_cc / k.v_cc * net_flow / BAR;
        let w = PI / 30.0;
        let n_dot = (k.eta_m * gp.mdot_t * k.cp * (x.t_cc - gp.t_t) - gp.mdot_c * k.cp * (gp.t_c - gp.t_d))
            / (k.inertia * x.n * w * w);
        let beta = k.bypass_ratio;
        // mixer temperature taken equal to the turbine exit temperature
        let p_t_dot =
            r * gp.t_t / k.v_m * (gp.mdot_t + beta / (beta + 1.0) * gp.mdot_c - gp.mdot_n) / BAR;
        let dx = Vec4::new(p_cc_dot, n_dot, t_cc_dot, p_t_dot);
        for (i, name) in ["dP_cc/dt", "dN/dt", "dT_cc/dt", "dP_t/dt"].iter().enumerate() {
            if !dx[i].is_finite() {
                return Err(Error::non_finite(*name));
            }
        }
        Ok(dx)
    }

    /// Noise-free sensor outputs `[T_C, P_C, N, T_T, P_T]`; `P_C` equals `P_cc`.
    pub fn outputs(&self, x: &EngineState, h: &HealthFactors, amb: &AmbientCondition) -> Result<Vec5> {
        let gp = self.gas_path(x, h, amb)?;
        Ok(Vec5::new(gp.t_c, x.p_cc, x.n, gp.t_t, x.p_t))
    }

    /// One classical Runge-Kutta step with inputs held over `dt`.
    pub fn step(
        &self,
        x: &EngineState,
        h: &HealthFactors,
        fuel_flow: f64,
        amb: &AmbientCondition,
        dt: f64,
    ) -> Result<EngineState> {
        let v = x.to_vector();
        let f = |v: &Vec4| self.derivatives(&EngineState::from_vector(v), h, fuel_flow, amb);
        let k1 = f(&v)?;
        let k2 = f(&(v + k1 * (0.5 * dt)))?;
        let k3 = f(&(v + k2 * (0.5 * dt)))?;
        let k4 = f(&(v + k3 * dt))?;
        let next = EngineState::from_vector(&(v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)));
        if !next.is_valid() {
            return Err(Error::non_finite("integrated state left the positive orthant"));
        }
        Ok(next)
    }

    /// Scaled residual `dx_i / x_i` used by the trim solver.
    fn scaled_residual(
        &self,
        v: &Vec4,
        h: &HealthFactors,
        fuel_flow: f64,
        amb: &AmbientCondition,
    ) -> Result<Vec4> {
        let dx = self.derivatives(&EngineState::from_vector(v), h, fuel_flow, amb)?;
        Ok(dx.component_div(v))
    }

    /// Steady state for the given fuel flow and flight condition (healthy engine).
    pub fn trim(&self, fuel_flow: f64, amb: &AmbientCondition) -> Result<EngineState> {
        self.trim_with(fuel_flow, amb, &HealthFactors::healthy(), None, TrimOptions::default())
    }

    /// Damped Newton iteration on `dx/dt = 0` with a central-difference Jacobian, falling back
    /// to time integration toward equilibrium when Newton stalls.
    pub fn trim_with(
        &self,
        fuel_flow: f64,
        amb: &AmbientCondition,
        h: &HealthFactors,
        guess: Option<EngineState>,
        opts: TrimOptions,
    ) -> Result<EngineState> {
        if !(fuel_flow > 0.0 && fuel_flow.is_finite()) {
            return Err(Error::InvalidInput(format!("fuel flow must be positive, got {fuel_flow}")));
        }
        let start = guess.unwrap_or(self.design_state);
        match self.newton(start.to_vector(), h, fuel_flow, amb, opts) {
            Ok(v) => Ok(EngineState::from_vector(&v)),
            Err(_) => {
                // settle dynamically, then polish
                let mut x = start;
                for _ in 0..12_000 {
                    x = self.step(&x, h, fuel_flow, amb, 0.01)?;
                }
                self.newton(x.to_vector(), h, fuel_flow, amb, opts).map(|v| EngineState::from_vector(&v))
            }
        }
    }

    fn newton(
        &self,
        mut v: Vec4,
        h: &HealthFactors,
        fuel_flow: f64,
        amb: &AmbientCondition,
        opts: TrimOptions,
    ) -> Result<Vec4> {
        let mut r = self.scaled_residual(&v, h, fuel_flow, amb)?;
        let mut norm = r.norm();
        for _ in 0..opts.max_iterations {
            if norm <= opts.tolerance {
                return Ok(v);
            }
            let mut jac = Matrix4::zeros();
            for j in 0..4 {
                let step = 1e-6 * v[j].abs().max(1.0);
                let mut vp = v;
                let mut vm = v;
                vp[j] += step;
                vm[j] -= step;
                let col = (self.scaled_residual(&vp, h, fuel_flow, amb)?
                    - self.scaled_residual(&vm, h, fuel_flow, amb)?)
                    / (2.0 * step);
                jac.set_column(j, &col);
            }
            let delta: Vector4<f64> = jac.lu().solve(&(-r)).ok_or(Error::TrimFailed {
                iterations: 0,
                residual: norm,
            })?;
            // limit relative steps to 20 % per component, then backtrack
            let max_rel = delta.component_div(&v).amax();
            let mut alpha = if max_rel > 0.2 { 0.2 / max_rel } else { 1.0 };
            let mut accepted = false;
            for _ in 0..30 {
                let cand = v + delta * alpha;
                if cand.iter().all(|c| *c > 0.0) {
                    if let Ok(rc) = self.scaled_residual(&cand, h, fuel_flow, amb) {
                        let nc = rc.norm();
                        if nc < norm || nc <= opts.tolerance {
                            v = cand;
                            r = rc;
                            norm = nc;
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if norm <= opts.tolerance {
            Ok(v)
        } else {
            Err(Error::TrimFailed { iterations: opts.max_iterations, residual: norm })
        }
    }
}

/// Convergent-nozzle mass flow per unit area [kg/(s m^2)], choked or unchoked depending on the
/// ambient-to-total pressure ratio.
fn nozzle_flow_per_area(p_t_bar: f64, t_t: f64, p_amb_bar: f64, gamma: f64, r: f64) -> f64 {
    let g = gamma;
    let crit = (2.0 / (g + 1.0)).powf(g / (g - 1.0));
    let ratio = (p_amb_bar / p_t_bar).min(1.0);
    let psi = if ratio <= crit {
        g.sqrt() * (2.0 / (g + 1.0)).powf((g + 1.0) / (2.0 * (g - 1.0)))
    } else {
        (2.0 * g / (g - 1.0) * (ratio.powf(2.0 / g) - ratio.powf((g + 1.0) / g))).max(0.0).sqrt()
    };
    p_t_bar * BAR / (r * t_t).sqrt() * psi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nozzle_flow_is_continuous_at_choking() {
        let g: f64 = 1.4;
        let crit = (2.0 / (g + 1.0)).powf(g / (g - 1.0));
        let below = nozzle_flow_per_area(1.0, 900.0, crit * (1.0 - 1e-9), g, 287.0);
        let above = nozzle_flow_per_area(1.0, 900.0, crit * (1.0 + 1e-9), g, 287.0);
        assert!((below - above).abs() / below < 1e-8);
        assert_eq!(nozzle_flow_per_area(1.0, 900.0, 1.0, g, 287.0), 0.0);
    }

    #[test]
    fn design_point_is_equilibrium() {
        let e = Engine::new(EngineConfig::default()).unwrap();
        let dx = e
            .derivatives(&e.design_state(), &HealthFactors::healthy(), e.config().design.fuel_flow, &e.design_ambient())
            .unwrap();
        let scaled = dx.component_div(&e.design_state().to_vector());
        assert!(scaled.norm() < 1e-10, "{scaled:?}");
    }
}
