use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lqr::{dlqr, spectral_radius};
use super::EnvError;

/// Largest spectral radius accepted for the transition matrix.
pub const STABILITY_GUARD: f64 = 1.05;

/// Noisy linear system `s' = A s + B u + w`, observed as `s + v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdsSpec {
    /// `n × n`, row-major rows.
    pub a: Vec<Vec<f64>>,
    /// `n × m`, row-major rows.
    pub b: Vec<Vec<f64>>,
    pub process_noise: f64,
    pub obs_noise: f64,
    pub init_std: f64,
    pub horizon: usize,
}

impl Default for LdsSpec {
    fn default() -> Self {
        Self::with_dims(4, 2)
    }
}

fn rotation_blocks(
    n: usize,
    radii: impl Fn(usize) -> f64,
    angles: impl Fn(usize) -> f64,
) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    let mut i = 0;
    while i + 1 < n {
        let (r, w) = (radii(i / 2), angles(i / 2));
        a[i][i] = r * w.cos();
        a[i][i + 1] = -r * w.sin();
        a[i + 1][i] = r * w.sin();
        a[i + 1][i + 1] = r * w.cos();
        i += 2;
    }
    if i < n {
        a[i][i] = 0.95;
    }
    a
}

impl LdsSpec {
    /// Lightly damped oscillators (block rotations) driven through `m` inputs.
    pub fn with_dims(n: usize, m: usize) -> Self {
        let a = rotation_blocks(n, |j| 0.98 - 0.03 * j as f64, |j| 0.2 + 0.25 * j as f64);
        let mut b = vec![vec![0.0; m]; n];
        for (i, row) in b.iter_mut().enumerate() {
            row[i % m.max(1)] = if i % 2 == 1 { 0.5 } else { 0.1 };
        }
        Self {
            a,
            b,
            process_noise: 0.05,
            obs_noise: 0.1,
            init_std: 1.0,
            horizon: 100,
        }
    }

    /// Noiseless undamped rotation with no input: exactly predictable from
    /// the current observation.
    pub fn realizable() -> Self {
        Self {
            a: rotation_blocks(2, |_| 1.0, |_| 0.3),
            b: vec![vec![0.0]; 2],
            process_noise: 0.0,
            obs_noise: 0.0,
            init_std: 1.0,
            horizon: 50,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        DMatrix::from_row_iterator(n, n, self.a.iter().flatten().copied())
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            self.state_dim(),
            self.input_dim(),
            self.b.iter().flatten().copied(),
        )
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let n = self.state_dim();
        if n == 0 || self.a.iter().any(|r| r.len() != n) || self.b.len() != n {
            return Err(EnvError::Config(
                "lds matrices have inconsistent shapes".into(),
            ));
        }
        let m = self.input_dim();
        if self.b.iter().any(|r| r.len() != m) {
            return Err(EnvError::Config("lds B rows differ in length".into()));
        }
        let rho = spectral_radius(&self.a_matrix());
        if rho > STABILITY_GUARD {
            return Err(EnvError::Unstable(rho));
        }
        Ok(())
    }

    /// LQR gain with identity weights, for state-feedback data collection.
    pub fn lqr_gain(&self) -> Result<DMatrix<f64>, EnvError> {
        let (n, m) = (self.state_dim(), self.input_dim());
        dlqr(
            &self.a_matrix(),
            &self.b_matrix(),
            &DMatrix::identity(n, n),
            &DMatrix::identity(m, m),
        )
    }
}

pub fn lds_step(state: &[f64], input: &[f64], spec: &LdsSpec, rng: &mut impl Rng) -> Vec<f64> {
    spec.a
        .iter()
        .zip(&spec.b)
        .map(|(arow, brow)| {
            let drift: f64 = arow.iter().zip(state).map(|(a, s)| a * s).sum();
            let forced: f64 = brow.iter().zip(input).map(|(b, u)| b * u).sum();
            let noise = if spec.process_noise > 0.0 {
                spec.process_noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            drift + forced + noise
        })
        .collect()
}

pub fn lds_observe(state: &[f64], spec: &LdsSpec, rng: &mut impl Rng) -> Vec<f64> {
    state
        .iter()
        .map(|s| {
            if spec.obs_noise > 0.0 {
                s + spec.obs_noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                *s
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn quiet(a: Vec<Vec<f64>>, m: usize) -> LdsSpec {
        let n = a.len();
        LdsSpec {
            a,
            b: vec![vec![0.0; m]; n],
            process_noise: 0.0,
            obs_noise: 0.0,
            init_std: 1.0,
            horizon: 10,
        }
    }

    #[test]
    fn identity_dynamics_hold_state() {
        let spec = quiet(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1);
        let mut rng = stream(0, Stream::Test, 0);
        let mut s = vec![0.3, -0.7];
        for _ in 0..20 {
            s = lds_step(&s, &[1.0], &spec, &mut rng);
        }
        assert_eq!(s, vec![0.3, -0.7]);
        let zero = lds_step(&[0.0, 0.0], &[0.0], &LdsSpec { ..spec }, &mut rng);
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn stability_guard() {
        assert!(LdsSpec::default().validate().is_ok());
        assert!(LdsSpec::realizable().validate().is_ok());
        let bad = quiet(vec![vec![1.2, 0.0], vec![0.0, 0.5]], 1);
        assert!(matches!(bad.validate(), Err(EnvError::Unstable(r)) if (r - 1.2).abs() < 1e-12));
    }

    #[test]
    fn observation_noise_is_centred() {
        let spec = LdsSpec {
            obs_noise: 0.5,
            ..quiet(vec![vec![1.0]], 1)
        };
        let mut rng = stream(17, Stream::Test, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| lds_observe(&[0.0], &spec, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * 0.5 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn lqr_gain_stabilizes_default_system() {
        let spec = LdsSpec::default();
        let k = spec.lqr_gain().unwrap();
        let closed = spec.a_matrix() - spec.b_matrix() * k;
        assert!(spectral_radius(&closed) < spectral_radius(&spec.a_matrix()));
    }
}
