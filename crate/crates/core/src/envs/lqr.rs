//! Discrete-time infinite-horizon LQR by fixed-point Riccati iteration.

use nalgebra::DMatrix;

use super::EnvError;

pub const RICCATI_TOL: f64 = 1e-9;
pub const RICCATI_MAX_ITERS: usize = 10_000;

/// Returns the feedback gain `K` (`m × n`) for `u = −K s`.
pub fn dlqr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, EnvError> {
    let mut p = q.clone();
    for _ in 0..RICCATI_MAX_ITERS {
        let bt_p = b.transpose() * &p;
        let gain_den = r + &bt_p * b;
        let inv = gain_den
            .try_inverse()
            .ok_or(EnvError::Riccati("singular R + BᵀPB"))?;
        let k = &inv * &bt_p * a;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
        let diff = (&next - &p).amax();
        p = next;
        if diff < RICCATI_TOL {
            let bt_p = b.transpose() * &p;
            let inv = (r + &bt_p * b)
                .try_inverse()
                .ok_or(EnvError::Riccati("singular R + BᵀPB"))?;
            return Ok(inv * bt_p * a);
        }
    }
    Err(EnvError::Riccati("no convergence within 10000 iterations"))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
