use nalgebra::Cholesky;

use super::{BaselineConfig, SigmaPointConfig};
use crate::engine::{AmbientCondition, Engine, EngineState, HealthFactors};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, CovFactor, Mat4, Mat45, Mat5, Vec4, Vec5};
use crate::linearize::{jacobian, Scaling};
use crate::mm_fdi::{ModeResidual, ResidualSource, Sample};

/// Relative finite-difference step for EKF Jacobians.
const EKF_FD_STEP: f64 = 1e-6;
/// Number of times the diagonal loading is escalated (x10 each) before giving up.
const JITTER_RETRIES: usize = 8;

/// Recursion used by a nonlinear filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearKind {
    Ekf,
    Ukf(SigmaPointConfig),
    /// Third-degree spherical-radial cubature rule.
    Ckf,
}

/// State estimate and covariance in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub x: Vec4,
    pub p: Mat4,
}

/// Innovation and its covariance from one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub gamma: Vec5,
    pub s: Mat5,
}

/// Lower Cholesky factor, loading the diagonal with `jitter` (escalating) when `p` is not
/// positive definite.
fn sqrt_factor(p: &Mat4, jitter: f64) -> Result<Mat4> {
    let p = symmetrize(p);
    if let Some(c) = Cholesky::new(p) {
        return Ok(c.l());
    }
    let mut load = jitter;
    for _ in 0..JITTER_RETRIES {
        if let Some(c) = Cholesky::new(p + Mat4::identity() * load) {
            return Ok(c.l());
        }
        load *= 10.0;
    }
    Err(Error::SingularCovariance)
}

impl NonlinearKind {
    /// Points with mean and covariance weights.
    fn points(&self, est: &Estimate, jitter: f64) -> Result<(Vec<Vec4>, Vec<f64>, Vec<f64>)> {
        let n = 4;
        let l = sqrt_factor(&est.p, jitter)?;
        let (scale, wm, wc, center) = match self {
            NonlinearKind::Ukf(cfg) => {
                let (lambda, wm, wc) = cfg.weights(n);
                ((n as f64 + lambda).sqrt(), wm, wc, true)
            }
            NonlinearKind::Ckf => {
                let w = vec![1.0 / (2 * n) as f64; 2 * n];
                ((n as f64).sqrt(), w.clone(), w, false)
            }
            NonlinearKind::Ekf => unreachable!("EKF does not use sample points"),
        };
        let mut pts = Vec::with_capacity(2 * n + 1);
        if center {
            pts.push(est.x);
        }
        for j in 0..n {
            pts.push(est.x + l.column(j) * scale);
        }
        for j in 0..n {
            pts.push(est.x - l.column(j) * scale);
        }
        Ok((pts, wm, wc))
    }

    /// Time update through the discrete transition `f` with additive process noise `q`.
    pub fn predict<F>(&self, est: &Estimate, f: F, q: &Mat4, jitter: f64) -> Result<Estimate>
    where
        F: Fn(&Vec4) -> Result<Vec4>,
    {
        let next = match self {
            NonlinearKind::Ekf => {
                let phi: Mat4 = jacobian(&f, &est.x, EKF_FD_STEP)?;
                Estimate { x: f(&est.x)?, p: phi * est.p * phi.transpose() + q }
            }
            _ => {
                let (pts, wm, wc) = self.points(est, jitter)?;
                let prop = pts.iter().map(&f).collect::<Result<Vec<_>>>()?;
                let x: Vec4 = prop.iter().zip(&wm).map(|(p, w)| p * *w).sum();
                let mut p = *q;
                for (pt, w) in prop.iter().zip(&wc) {
                    let d = pt - x;
                    p += d * d.transpose() * *w;
                }
                Estimate { x, p }
            }
        };
        Ok(Estimate { x: next.x, p: symmetrize(&next.p) })
    }

    /// Measurement update with output map `h`, measurement `y` and noise `r`.
    pub fn update<H>(&self, est: &Estimate, h: H, y: &Vec5, r: &Mat5, jitter: f64) -> Result<(Estimate, Innovation)>
    where
        H: Fn(&Vec4) -> Result<Vec5>,
    {
        let (y_hat, s, pxy) = match self {
            NonlinearKind::Ekf => {
                let c = jacobian(&h, &est.x, EKF_FD_STEP)?;
                (h(&est.x)?, c * est.p * c.transpose() + r, est.p * c.transpose())
            }
            _ => {
                let (pts, wm, wc) = self.points(est, jitter)?;
                let ys = pts.iter().map(&h).collect::<Result<Vec<_>>>()?;
                let y_hat: Vec5 = ys.iter().zip(&wm).map(|(v, w)| v * *w).sum();
                let mut s = *r;
                let mut pxy = Mat45::zeros();
                for ((pt, yi), w) in pts.iter().zip(&ys).zip(&wc) {
                    let dy = yi - y_hat;
                    s += dy * dy.transpose() * *w;
                    pxy += (pt - est.x) * dy.transpose() * *w;
                }
                (y_hat, s, pxy)
            }
        };
        let s = symmetrize(&s);
        let gamma = y - y_hat;
        if !gamma.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("nonlinear filter innovation"));
        }
        let factor = CovFactor::new(&s)?;
        let k = pxy * factor.inverse();
        let x = est.x + k * gamma;
        let p = symmetrize(&(est.p - k * s * k.transpose()));
        Ok((Estimate { x, p }, Innovation { gamma, s }))
    }
}

/// One nonlinear filter per sensor hypothesis over the engine model, sampled every
/// `decimation` plant steps with the recorded inputs replayed through RK4 substeps.
#[derive(Debug, Clone)]
pub struct NonlinearBank {
    kind: NonlinearKind,
    engine: Engine,
    health: HealthFactors,
    scaling: Scaling,
    q: Mat4,
    r: Mat5,
    jitter: f64,
    plant_dt: f64,
    decimation: usize,
    offsets: Vec<Vec5>,
    estimates: Vec<Estimate>,
    inputs: Vec<(f64, AmbientCondition)>,
    seen: usize,
}

impl NonlinearBank {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: NonlinearKind,
        engine: Engine,
        health: HealthFactors,
        scaling: Scaling,
        q: Mat4,
        r: Mat5,
        cfg: &BaselineConfig,
        plant_dt: f64,
        x0: &EngineState,
        offsets: &[Vec5],
    ) -> Result<Self> {
        health.validate()?;
        x0.validate()?;
        let ratio = cfg.period / plant_dt;
        let decimation = ratio.round() as usize;
        if decimation == 0 || (ratio - decimation as f64).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "filter period {} s is not a multiple of the plant step {plant_dt} s",
                cfg.period
            )));
        }
        if !(cfg.jitter > 0.0) {
            return Err(Error::InvalidInput("covariance jitter must be positive".into()));
        }
        let start = Estimate { x: scaling.x(&x0.to_vector()), p: q };
        Ok(Self {
            kind,
            engine,
            health,
            scaling,
            q,
            r,
            jitter: cfg.jitter,
            plant_dt,
            decimation,
            offsets: offsets.to_vec(),
            estimates: vec![start; offsets.len()],
            inputs: Vec::with_capacity(decimation),
            seen: 0,
        })
    }

    pub fn kind(&self) -> NonlinearKind {
        self.kind
    }

    pub fn estimate(&self, mode: usize) -> &Estimate {
        &self.estimates[mode]
    }

    /// Replays the buffered inputs from a normalized state.
    fn transition(&self, xn: &Vec4) -> Result<Vec4> {
        let mut x = EngineState::from_vector(&self.scaling.x_phys(xn));
        for (fuel, amb) in &self.inputs {
            x = self.engine.step(&x, &self.health, *fuel, amb, self.plant_dt)?;
        }
        Ok(self.scaling.x(&x.to_vector()))
    }

    fn output(&self, xn: &Vec4, amb: &AmbientCondition) -> Result<Vec5> {
        let x = EngineState::from_vector(&self.scaling.x_phys(xn));
        if !x.is_valid() {
            return Err(Error::non_finite("nonlinear filter state left the positive orthant"));
        }
        Ok(self.scaling.y(&self.engine.outputs(&x, &self.health, amb)?))
    }
}

impl ResidualSource for NonlinearBank {
    fn reset_hypotheses(&mut self, offsets: &[Vec5], seed_mode: Option<usize>) -> Result<()> {
        let seed = match seed_mode {
            Some(m) => *self
                .estimates
                .get(m)
                .ok_or_else(|| Error::InvalidInput(format!("no mode {m} to seed from")))?,
            None => self.estimates[0],
        };
        self.offsets = offsets.to_vec();
        self.estimates = vec![seed; offsets.len()];
        Ok(())
    }

    fn step(&mut self, sample: &Sample) -> Result<Option<Vec<ModeResidual>>> {
        let due = self.seen % self.decimation == 0;
        let mut out = None;
        if due {
            let propagate = self.seen > 0;
            let mut residuals = Vec::with_capacity(self.offsets.len());
            for mode in 0..self.offsets.len() {
                let mut est = self.estimates[mode];
                if propagate {
                    est = self.kind.predict(&est, |x| self.transition(x), &self.q, self.jitter)?;
                }
                let offset = self.offsets[mode];
                let h = |x: &Vec4| Ok(self.output(x, &sample.ambient)? + offset);
                let (next, inn) = self.kind.update(&est, h, &sample.y, &self.r, self.jitter)?;
                self.estimates[mode] = next;
                residuals.push(ModeResidual { gamma: inn.gamma, s: inn.s });
            }
            self.inputs.clear();
            out = Some(residuals);
        }
        self.inputs.push((sample.fuel_flow, sample.ambient));
        self.seen += 1;
        Ok(out)
    }

    fn period(&self) -> f64 {
        self.plant_dt * self.decimation as f64
    }

    fn update_baseline(&mut self, health: &HealthFactors) -> Result<()> {
        health.validate()?;
        self.health = *health;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat54;
    use approx::assert_relative_eq;

    fn linear_system() -> (Mat4, Vec4, Mat54) {
        let a = Mat4::from_fn(|i, j| if i == j { 0.9 - 0.1 * i as f64 } else { 0.02 * (i as f64 - j as f64) });
        let b = Vec4::new(0.01, -0.02, 0.03, 0.0);
        let c = Mat54::from_fn(|i, j| if i == j { 1.0 } else if i == 4 { 0.3 * (j as f64 + 1.0) } else { 0.1 });
        (a, b, c)
    }

    #[test]
    fn all_recursions_reduce_to_the_kalman_filter_on_a_linear_plant() {
        let (a, b, c) = linear_system();
        let q = Mat4::identity() * 0.1;
        let r = Mat5::identity() * 0.01;
        let kinds = [NonlinearKind::Ekf, NonlinearKind::Ukf(SigmaPointConfig::default()), NonlinearKind::Ckf];
        let start = Estimate { x: Vec4::new(1.0, 0.5, -0.2, 0.8), p: q };
        let mut reference = start;
        let mut ests = [start; 3];
        for k in 0..30 {
            let y = Vec5::from_fn(|i, _| ((k * 5 + i) as f64 * 0.37).sin());
            // textbook Kalman filter
            let s = c * reference.p * c.transpose() + r;
            let gain = reference.p * c.transpose() * s.try_inverse().unwrap();
            let gamma = y - c * reference.x;
            let upd = Estimate { x: reference.x + gain * gamma, p: reference.p - gain * s * gain.transpose() };
            reference = Estimate { x: a * upd.x + b, p: a * upd.p * a.transpose() + q };
            for (kind, est) in kinds.iter().zip(ests.iter_mut()) {
                let (u, inn) = kind.update(est, |x| Ok(c * x), &y, &r, 1e-12).unwrap();
                assert_relative_eq!(inn.gamma, gamma, epsilon = 1e-8);
                *est = kind.predict(&u, |x| Ok(a * x + b), &q, 1e-12).unwrap();
                assert_relative_eq!(est.x, reference.x, epsilon = 1e-8);
                assert_relative_eq!(est.p, reference.p, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cubature_points_are_symmetric_with_equal_weights() {
        let est = Estimate { x: Vec4::new(1.0, 2.0, 3.0, 4.0), p: Mat4::identity() * 0.25 };
        let (pts, wm, wc) = NonlinearKind::Ckf.points(&est, 1e-12).unwrap();
        assert_eq!(pts.len(), 8);
        assert!(wm.iter().chain(&wc).all(|w| *w == 0.125));
        for j in 0..4 {
            assert_relative_eq!((pts[j] + pts[j + 4]) / 2.0, est.x, epsilon = 1e-15);
            assert_relative_eq!((pts[j] - est.x).norm(), 2.0 * 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn indefinite_covariance_is_jittered_or_rejected() {
        let mut p = Mat4::identity();
        p[(3, 3)] = 0.0;
        assert!(sqrt_factor(&p, 1e-12).is_ok());
        p[(3, 3)] = -1.0;
        assert!(matches!(sqrt_factor(&p, 1e-12), Err(Error::SingularCovariance)));
    }
}
