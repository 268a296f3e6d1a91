//! Fixed-size matrix aliases for the four-state, five-sensor engine.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};

pub const NX: usize = 4;
pub const NY: usize = 5;

pub type Vec4 = SVector<f64, NX>;
pub type Vec5 = SVector<f64, NY>;
pub type Mat4 = SMatrix<f64, NX, NX>;
pub type Mat5 = SMatrix<f64, NY, NY>;
/// Output matrix (sensors x states).
pub type Mat54 = SMatrix<f64, NY, NX>;
/// Gain matrix (states x sensors).
pub type Mat45 = SMatrix<f64, NX, NY>;
pub type Col4 = SMatrix<f64, NX, 1>;

/// Cholesky factor of an innovation covariance together with its log-determinant.
#[derive(Debug, Clone)]
pub struct CovFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Const<NY>>,
    log_det: f64,
}

impl CovFactor {
    pub fn new(s: &Mat5) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(*s).ok_or(Error::SingularCovariance)?;
        let l = chol.l_dirty();
        let log_det = 2.0 * (0..NY).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance);
        }
        Ok(Self { chol, log_det })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// gamma' S^-1 gamma
    pub fn mahalanobis(&self, gamma: &Vec5) -> f64 {
        gamma.dot(&self.chol.solve(gamma))
    }

    pub fn solve(&self, v: &Vec5) -> Vec5 {
        self.chol.solve(v)
    }

    pub fn inverse(&self) -> Mat5 {
        self.chol.inverse()
    }
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
