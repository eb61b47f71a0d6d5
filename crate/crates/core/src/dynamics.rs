//! Stochastic double-integrator motion with damping and hard state bounds.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub q: Vec2,
    pub v: Vec2,
    pub theta: f64,
    pub omega: f64,
}

/// Bounds on `|q|`, `|v|` and `|omega|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits {
    pub q_max: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl MotionLimits {
    pub const UNBOUNDED: MotionLimits = MotionLimits {
        q_max: f64::INFINITY,
        v_max: f64::INFINITY,
        omega_max: f64::INFINITY,
    };
}

/// Raw readouts after noise and squashing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlSignal {
    pub a_s: f64,
    pub a_u: f64,
    pub s: f64,
    pub u: f64,
}

/// Maps controller readouts to thrust and torque.
///
/// Thrust saturates at half a body diameter; both channels carry
/// multiplicative noise `1 + epsilon * xi`.
pub fn apply_control(a_s: f64, a_u: f64, noise: (f64, f64), epsilon: f64, d_b: f64) -> (f64, f64) {
    let s = 0.5 * d_b * a_s.tanh() * (1.0 + epsilon * noise.0);
    let u = a_u.tanh() * (1.0 + epsilon * noise.1);
    (s, u)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut w = (theta + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w += TAU;
    }
    if w > PI {
        w = PI;
    }
    w
}

/// Radially rescales `v` onto the disk of radius `max` if it lies outside.
pub fn clamp_norm(v: Vec2, max: f64) -> Vec2 {
    let norm = v[0].hypot(v[1]);
    if norm > max {
        let k = max / norm;
        [v[0] * k, v[1] * k]
    } else {
        v
    }
}

pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

/// One explicit forward-Euler step; every derivative uses the time-t state.
/// Bounds are applied after the full update.
pub fn integrate_step(
    state: &KinematicState,
    s: f64,
    u: f64,
    lambda: f64,
    dt: f64,
    limits: &MotionLimits,
) -> KinematicState {
    let (sin, cos) = state.theta.sin_cos();
    let q = [state.q[0] + dt * state.v[0], state.q[1] + dt * state.v[1]];
    let v = [
        state.v[0] + dt * (s * cos - lambda * state.v[0]),
        state.v[1] + dt * (s * sin - lambda * state.v[1]),
    ];
    let theta = wrap_angle(state.theta + dt * state.omega);
    let omega = state.omega + dt * (u - lambda * state.omega);
    clamp_state(
        KinematicState { q, v, theta, omega },
        limits,
    )
}

pub fn clamp_state(state: KinematicState, limits: &MotionLimits) -> KinematicState {
    KinematicState {
        q: clamp_norm(state.q, limits.q_max),
        v: clamp_norm(state.v, limits.v_max),
        theta: state.theta,
        omega: state.omega.clamp(-limits.omega_max, limits.omega_max),
    }
}
