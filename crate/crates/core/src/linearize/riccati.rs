use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, CovFactor, Mat4, Mat45, Mat5, Mat54};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiccatiOptions {
    /// Stop when the largest absolute change of `P` between iterations falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 200_000 }
    }
}

/// Converged discrete Riccati quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    /// Predictor-form gain `A P C' (C P C' + R)^-1`.
    pub k: Mat45,
    /// One-step prediction covariance.
    pub p: Mat4,
    /// Stationary innovation covariance `C P C' + R`.
    pub s: Mat5,
    pub iterations: usize,
}

/// One step of the prediction-form Riccati recursion.
fn riccati_step(a: &Mat4, c: &Mat54, q: &Mat4, r: &Mat5, p: &Mat4) -> Result<(Mat4, Mat45, Mat5)> {
    let s = symmetrize(&(c * p * c.transpose() + r));
    let f = CovFactor::new(&s)?;
    let apct = a * p * c.transpose();
    // K = A P C' S^-1, computed row by row through the Cholesky solve (S symmetric)
    let mut k = Mat45::zeros();
    for i in 0..4 {
        let row = f.solve(&apct.row(i).transpose());
        k.set_row(i, &row.transpose());
    }
    let next = symmetrize(&(a * p * a.transpose() - k * apct.transpose() + q));
    Ok((next, k, s))
}

/// Fixed-point iteration of `P <- A P A' - A P C'(C P C' + R)^-1 C P A' + Q` starting at `Q`.
pub fn dare_gain(a: &Mat4, c: &Mat54, q: &Mat4, r: &Mat5, opts: &RiccatiOptions) -> Result<DareSolution> {
    CovFactor::new(r)?;
    let mut p = *q;
    let mut last_step = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let (next, _, _) = riccati_step(a, c, q, r, &p)?;
        last_step = (next - p).amax();
        if !last_step.is_finite() {
            break;
        }
        p = next;
        if last_step <= opts.tolerance {
            let s = symmetrize(&(c * p * c.transpose() + r));
            let k = a * p * c.transpose() * CovFactor::new(&s)?.inverse();
            return Ok(DareSolution { k, p, s, iterations: it });
        }
    }
    Err(Error::RiccatiDiverged { iterations: opts.max_iterations, last_step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Four decoupled scalar channels observed one-to-one, fifth sensor unused.
    fn diagonal_system(a: f64) -> (Mat4, Mat54) {
        let mut c = Mat54::zeros();
        c.fixed_view_mut::<4, 4>(0, 0).copy_from(&Mat4::identity());
        (Mat4::identity() * a, c)
    }

    #[test]
    fn scalar_closed_form() {
        let (a, c) = diagonal_system(0.5);
        let sol = dare_gain(&a, &c, &Mat4::identity(), &Mat5::identity(), &RiccatiOptions::default()).unwrap();
        // p^2 - 0.25 p - 1 = 0
        let p = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert_relative_eq!(sol.p, Mat4::identity() * p, epsilon = 1e-9);
        let k = 0.5 * p / (p + 1.0);
        for i in 0..4 {
            assert_relative_eq!(sol.k[(i, i)], k, epsilon = 1e-9);
            assert_eq!(sol.k[(i, 4)], 0.0);
        }
        assert_relative_eq!(p, 1.1328, epsilon = 1e-4);
        assert_relative_eq!(k, 0.2656, epsilon = 1e-4);
    }

    #[test]
    fn zero_process_noise_decays() {
        let (a, c) = diagonal_system(0.5);
        let sol = dare_gain(&a, &c, &Mat4::zeros(), &Mat5::identity(), &RiccatiOptions::default()).unwrap();
        assert!(sol.p.amax() < 1e-9 && sol.k.amax() < 1e-9);
    }

    #[test]
    fn converged_covariance_is_a_fixed_point() {
        let a = Mat4::new(0.99, 0.01, 0.0, 0.0, 0.0, 0.98, 0.02, 0.0, 0.01, 0.0, 0.97, 0.01, 0.0, 0.0, 0.01, 0.995);
        let c = Mat54::from_fn(|i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 });
        let q = Mat4::identity() * 0.1;
        let r = Mat5::identity() * 0.01;
        let sol = dare_gain(&a, &c, &q, &r, &RiccatiOptions::default()).unwrap();
        let (next, _, _) = riccati_step(&a, &c, &q, &r, &sol.p).unwrap();
        assert!((next - sol.p).amax() <= 1e-10);
        assert_relative_eq!(sol.s, c * sol.p * c.transpose() + r, epsilon = 1e-12);
    }

    #[test]
    fn undetectable_unstable_mode_diverges() {
        let mut a = Mat4::identity() * 0.5;
        a[(3, 3)] = 1.5;
        let mut c = Mat54::zeros();
        c[(0, 0)] = 1.0;
        let opts = RiccatiOptions { tolerance: 1e-10, max_iterations: 2_000 };
        let err = dare_gain(&a, &c, &Mat4::identity(), &Mat5::identity(), &opts).unwrap_err();
        assert!(matches!(err, Error::RiccatiDiverged { .. }));
    }
}
