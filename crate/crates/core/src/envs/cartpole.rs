use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lqr::dlqr;
use super::EnvError;

/// Cart-pole with the classic control constants and explicit Euler updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartpoleSpec {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub dt: f64,
    pub force_max: f64,
    pub horizon: usize,
    pub theta_limit: f64,
    pub x_limit: f64,
    /// Half-widths of the uniform initial-state box `(p, ṗ, θ, θ̇)`.
    pub init_range: [f64; 4],
    /// Std of Gaussian noise added to the applied force.
    pub force_noise: f64,
    /// Diagonal state cost and scalar input cost for the expert's LQR.
    pub expert_q: [f64; 4],
    pub expert_r: f64,
}

impl Default for CartpoleSpec {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            dt: 0.02,
            force_max: 10.0,
            horizon: 200,
            theta_limit: 12.0_f64.to_radians(),
            x_limit: 2.4,
            init_range: [0.05; 4],
            force_noise: 0.0,
            expert_q: [1.0, 1.0, 10.0, 1.0],
            expert_r: 0.1,
        }
    }
}

/// `(p, ṗ, θ, θ̇)`.
pub type CartpoleState = [f64; 4];

/// One Euler step with the force clamped to `±force_max`.
pub fn cartpole_step(state: CartpoleState, force: f64, spec: &CartpoleSpec) -> CartpoleState {
    let force = force.clamp(-spec.force_max, spec.force_max);
    let [x, x_dot, theta, theta_dot] = state;
    let total = spec.cart_mass + spec.pole_mass;
    let pml = spec.pole_mass * spec.half_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + pml * theta_dot * theta_dot * sin) / total;
    let theta_acc = (spec.gravity * sin - cos * temp)
        / (spec.half_length * (4.0 / 3.0 - spec.pole_mass * cos * cos / total));
    let x_acc = temp - pml * theta_acc * cos / total;
    [
        x + spec.dt * x_dot,
        x_dot + spec.dt * x_acc,
        theta + spec.dt * theta_dot,
        theta_dot + spec.dt * theta_acc,
    ]
}

/// Positions only: cart position and pole angle.
pub fn observe_po(state: &CartpoleState) -> [f64; 2] {
    [state[0], state[2]]
}

pub fn out_of_bounds(state: &CartpoleState, spec: &CartpoleSpec) -> bool {
    state[2].abs() > spec.theta_limit || state[0].abs() > spec.x_limit
}

/// Linearization about the upright equilibrium, discretized exactly as
/// [`cartpole_step`] integrates: `A = I + dt·Ac`, `B = dt·Bc`.
pub fn linearize(spec: &CartpoleSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let total = spec.cart_mass + spec.pole_mass;
    let pml = spec.pole_mass * spec.half_length;
    let den = spec.half_length * (4.0 / 3.0 - spec.pole_mass / total);
    let a_theta = spec.gravity / den;
    let b_theta = -1.0 / (total * den);
    let a_x = -pml * a_theta / total;
    let b_x = 1.0 / total - pml * b_theta / total;
    let dt = spec.dt;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, dt,  0.0,          0.0,
        0.0, 1.0, dt * a_x,     0.0,
        0.0, 0.0, 1.0,          dt,
        0.0, 0.0, dt * a_theta, 1.0,
    ]);
    let b = DMatrix::from_row_slice(4, 1, &[0.0, dt * b_x, 0.0, dt * b_theta]);
    (a, b)
}

/// Full-state linear feedback `u = −K s` from a discrete LQR solve.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrExpert {
    pub gain: [f64; 4],
}

impl LqrExpert {
    pub fn new(spec: &CartpoleSpec) -> Result<Self, EnvError> {
        let (a, b) = linearize(spec);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&spec.expert_q));
        let r = DMatrix::from_element(1, 1, spec.expert_r);
        let k = dlqr(&a, &b, &q, &r)?;
        Ok(Self {
            gain: [k[(0, 0)], k[(0, 1)], k[(0, 2)], k[(0, 3)]],
        })
    }

    pub fn act(&self, state: &CartpoleState) -> f64 {
        -self.gain.iter().zip(state).map(|(k, s)| k * s).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_drops_velocities() {
        assert_eq!(observe_po(&[1.0, 5.0, 0.2, -3.0]), [1.0, 0.2]);
    }

    #[test]
    fn hidden_velocities_alias_observations() {
        let a = [0.3, 1.0, 0.05, -0.5];
        let b = [0.3, -2.0, 0.05, 0.7];
        assert_ne!(a, b);
        assert_eq!(observe_po(&a), observe_po(&b));
    }

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let spec = CartpoleSpec::default();
        let mut s = [0.0; 4];
        for _ in 0..100 {
            s = cartpole_step(s, 0.0, &spec);
        }
        assert_eq!(s, [0.0; 4]);
    }

    #[test]
    fn termination_fires_on_first_violation() {
        let spec = CartpoleSpec::default();
        let mut s = [0.0, 0.0, 0.01, 0.0];
        let mut steps = 0;
        while !out_of_bounds(&s, &spec) {
            let prev = s;
            s = cartpole_step(s, 0.0, &spec);
            steps += 1;
            assert!(prev[2].abs() <= spec.theta_limit);
        }
        assert!(s[2].abs() > spec.theta_limit);
        assert!(steps > 1);
    }

    #[test]
    fn expert_is_deterministic_and_zero_at_origin() {
        let spec = CartpoleSpec::default();
        let e1 = LqrExpert::new(&spec).unwrap();
        let e2 = LqrExpert::new(&spec).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.act(&[0.0; 4]), 0.0);
        // pushing the cart toward a falling pole
        assert!(e1.act(&[0.0, 0.0, 0.05, 0.0]) > 0.0);
    }

    #[test]
    fn linearization_matches_dynamics_near_upright() {
        let spec = CartpoleSpec::default();
        let (a, b) = linearize(&spec);
        let s = [0.01, -0.02, 0.003, 0.01];
        let u = 0.5;
        let next = cartpole_step(s, u, &spec);
        let lin = &a * nalgebra::DVector::from_row_slice(&s) + &b * u;
        for i in 0..4 {
            assert!((next[i] - lin[i]).abs() < 1e-5, "{i}");
        }
    }
}
