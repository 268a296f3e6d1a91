//! Offline linearization: trim, finite-difference Jacobians, zero-order-hold discretization and
//! steady-state Kalman gains for a table of operating points.

mod bank;
mod riccati;

pub use bank::{build_bank, LinearizeOptions, ModelBank, OperatingPoint, BANK_FORMAT_VERSION};
pub use riccati::{dare_gain, DareSolution, RiccatiOptions};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::engine::{AmbientCondition, Engine, EngineState, HealthFactors};
use crate::error::{Error, Result};
use crate::linalg::{Col4, Mat4, Mat45, Mat5, Mat54, Vec4, Vec5};

/// Reference values used to normalize states, outputs and fuel flow (each quantity is divided
/// by its reference, so the cruise point maps to all ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub x_ref: Vec4,
    pub y_ref: Vec5,
    pub u_ref: f64,
}

impl Scaling {
    /// Normalization anchored on the engine's calibration (cruise) point.
    pub fn cruise(engine: &Engine) -> Self {
        Self {
            x_ref: engine.design_state().to_vector(),
            y_ref: engine.design_outputs(),
            u_ref: engine.config().design.fuel_flow,
        }
    }

    pub fn x(&self, x: &Vec4) -> Vec4 {
        x.component_div(&self.x_ref)
    }

    pub fn x_phys(&self, x: &Vec4) -> Vec4 {
        x.component_mul(&self.x_ref)
    }

    pub fn y(&self, y: &Vec5) -> Vec5 {
        y.component_div(&self.y_ref)
    }

    pub fn y_phys(&self, y: &Vec5) -> Vec5 {
        y.component_mul(&self.y_ref)
    }

    pub fn u(&self, u: f64) -> f64 {
        u / self.u_ref
    }
}

/// Continuous-time linearization `dx = A_c dx + B_c du`, `dy = C_c dx` about an anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearModel {
    pub a_c: Mat4,
    pub b_c: Col4,
    pub c_c: Mat54,
    pub x_ss: Vec4,
    pub u_ss: f64,
    pub y_ss: Vec5,
}

/// Per-component finite-difference step `rel * max(1, |x|)`.
fn fd_step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference Jacobian of a map of the four-dimensional state.
pub fn jacobian<const M: usize, F>(f: F, x: &Vec4, rel_step: f64) -> Result<SMatrix<f64, M, 4>>
where
    F: Fn(&Vec4) -> Result<SVector<f64, M>>,
{
    let mut jac = SMatrix::<f64, M, 4>::zeros();
    for j in 0..4 {
        let h = fd_step(x[j], rel_step);
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((f(&xp)? - f(&xm)?) / (2.0 * h)));
    }
    Ok(jac)
}

/// Central-difference Jacobians of `f(x, u)` (dynamics) and `g(x)` (outputs) at `(x_ss, u_ss)`.
pub fn jacobians<F, G>(f: F, g: G, x_ss: &Vec4, u_ss: f64, rel_step: f64) -> Result<ContinuousLinearModel>
where
    F: Fn(&Vec4, f64) -> Result<Vec4>,
    G: Fn(&Vec4) -> Result<Vec5>,
{
    let a_c = jacobian(|x| f(x, u_ss), x_ss, rel_step)?;
    let c_c = jacobian(&g, x_ss, rel_step)?;
    let h = fd_step(u_ss, rel_step);
    let b_c: Col4 = (f(x_ss, u_ss + h)? - f(x_ss, u_ss - h)?) / (2.0 * h);
    check_finite(&a_c, 0)?;
    check_finite(&b_c, 0)?;
    check_finite(&c_c, 4)?;
    Ok(ContinuousLinearModel { a_c, b_c, c_c, x_ss: *x_ss, u_ss, y_ss: g(x_ss)? })
}

/// `row_offset` places output rows after the four state rows in error reports.
fn check_finite<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>, row_offset: usize) -> Result<()> {
    for r in 0..R {
        for c in 0..C {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFiniteJacobian { row: r + row_offset, col: c });
            }
        }
    }
    Ok(())
}

/// Jacobians of the engine in normalized coordinates at a trimmed state.
pub fn linearize_engine(
    engine: &Engine,
    scaling: &Scaling,
    health: &HealthFactors,
    amb: &AmbientCondition,
    x_ss: &EngineState,
    u_ss: f64,
    rel_step: f64,
) -> Result<ContinuousLinearModel> {
    let f = |xn: &Vec4, un: f64| {
        let x = EngineState::from_vector(&scaling.x_phys(xn));
        Ok(scaling.x(&engine.derivatives(&x, health, un * scaling.u_ref, amb)?))
    };
    let g = |xn: &Vec4| {
        let x = EngineState::from_vector(&scaling.x_phys(xn));
        Ok(scaling.y(&engine.outputs(&x, health, amb)?))
    };
    jacobians(f, g, &scaling.x(&x_ss.to_vector()), scaling.u(u_ss), rel_step)
}

/// Zero-order-hold discretization from one exponential of `[[A_c, B_c], [0, 0]] * ts`.
pub fn discretize(a_c: &Mat4, b_c: &Col4, ts: f64) -> (Mat4, Col4) {
    let mut m = SMatrix::<f64, 5, 5>::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(&(a_c * ts));
    m.fixed_view_mut::<4, 1>(0, 4).copy_from(&(b_c * ts));
    let e = m.exp();
    (e.fixed_view::<4, 4>(0, 0).into_owned(), e.fixed_view::<4, 1>(0, 4).into_owned())
}

/// Discrete piecewise-linear model at one operating point with its steady-state gain.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePwlModel {
    pub id: usize,
    pub point: OperatingPoint,
    pub a: Mat4,
    pub b: Col4,
    pub c: Mat54,
    /// Predictor-form steady-state gain.
    pub k: Mat45,
    /// Converged one-step prediction covariance.
    pub p: Mat4,
    /// Stationary innovation covariance `C P C' + R`.
    pub s: Mat5,
    /// Anchor state, fuel flow and outputs in normalized units.
    pub x_ss: Vec4,
    pub u_ss: f64,
    pub y_ss: Vec5,
}

impl DiscretePwlModel {
    /// Spectral radius of the estimator error map `A - K C`.
    pub fn estimator_spectral_radius(&self) -> f64 {
        let m = self.a - self.k * self.c;
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Measurement-update gain `P C' S^-1`; the stored predictor gain is `A` times this.
    pub fn filter_gain(&self) -> Mat45 {
        match self.s.try_inverse() {
            Some(s_inv) => self.p * self.c.transpose() * s_inv,
            None => Mat45::zeros(),
        }
    }
}
