use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumSpec {
    pub gravity: f64,
    pub length: f64,
    pub mass: f64,
    pub damping: f64,
    pub dt: f64,
    pub horizon: usize,
    pub obs_noise: f64,
    /// Initial angle and angular velocity are drawn from `U(−a, a)`.
    pub init_angle: f64,
    pub init_velocity: f64,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            length: 1.0,
            mass: 1.0,
            damping: 0.05,
            dt: 0.05,
            horizon: 100,
            obs_noise: 0.0,
            init_angle: 1.0,
            init_velocity: 1.0,
        }
    }
}

/// `(θ, θ̇)`.
pub type PendulumState = [f64; 2];

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn angular_acceleration(state: PendulumState, torque: f64, spec: &PendulumSpec) -> f64 {
    let [theta, omega] = state;
    -(spec.gravity / spec.length) * theta.sin() - spec.damping * omega
        + torque / (spec.mass * spec.length * spec.length)
}

/// Semi-implicit Euler: velocity first, then angle with the new velocity.
pub fn pendulum_step(state: PendulumState, torque: f64, spec: &PendulumSpec) -> PendulumState {
    let omega = state[1] + spec.dt * angular_acceleration(state, torque, spec);
    let theta = wrap_angle(state[0] + spec.dt * omega);
    [theta, omega]
}

pub fn energy(state: PendulumState, spec: &PendulumSpec) -> f64 {
    let [theta, omega] = state;
    let ml2 = spec.mass * spec.length * spec.length;
    0.5 * ml2 * omega * omega + spec.mass * spec.gravity * spec.length * (1.0 - theta.cos())
}
