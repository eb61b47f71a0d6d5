//! Resource channels, depot bookkeeping and the birth/death lifecycle.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RolloutConfig;
use crate::dynamics::{clamp_norm, wrap_angle, KinematicState, Vec2};
use crate::engine::BoidState;
use crate::neural::{ControllerState, MutationRule, MutationStats};

/// How per-step exchange is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeClip {
    /// Each pairwise transfer is capped at `+-e_e_max`; flows stay zero-sum.
    #[default]
    Antisymmetric,
    /// The net intake is clipped to `[0, e_e_max]`, so donors lose nothing.
    NonNegative,
}

/// Depot, last-step channel values and their moving averages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceState {
    pub e: f64,
    pub e_g: f64,
    pub e_e: f64,
    pub e_c: f64,
    pub ebar: f64,
    pub ebar_g: f64,
    pub ebar_e: f64,
    pub ebar_c: f64,
    /// Moving average of `max(0, e_e)`.
    pub ebar_e_plus: f64,
    pub m: f64,
}

impl ResourceState {
    /// Fresh state with every average seeded from its instantaneous value.
    pub fn with_depot(e: f64) -> Self {
        Self {
            e,
            ebar: e,
            ..Default::default()
        }
    }

    /// Moves every moving average one step toward the current values.
    pub fn update_averages(&mut self, tau: f64, dt: f64) {
        self.ebar = ema(self.ebar, self.e, tau, dt);
        self.ebar_g = ema(self.ebar_g, self.e_g, tau, dt);
        self.ebar_e = ema(self.ebar_e, self.e_e, tau, dt);
        self.ebar_c = ema(self.ebar_c, self.e_c, tau, dt);
        self.ebar_e_plus = ema(self.ebar_e_plus, self.e_e.max(0.0), tau, dt);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LifecycleState {
    pub age: u32,
    pub active: bool,
    pub immortal: bool,
    pub birth_streak: u32,
    pub death_streak: u32,
}

/// First-order filter step `avg + dt * tau * (x - avg)`.
#[inline]
pub fn ema(avg: f64, x: f64, tau: f64, dt: f64) -> f64 {
    avg + dt * tau * (x - avg)
}

pub fn update_movement(m: f64, v: Vec2, omega: f64, tau_m: f64, dt: f64) -> f64 {
    ema(m, v[0].hypot(v[1]) + omega.abs(), tau_m, dt)
}

/// Mean movement over active slots. Returns 0 if no slot is active.
pub fn mean_movement(m: &[f64], active: &[bool]) -> f64 {
    let (sum, count) = m
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .fold((0.0, 0usize), |(s, c), (&x, _)| (s + x, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn grazing_gain(m_i: f64, m_n: f64, k_g: f64, cap: f64) -> f64 {
    (k_g * (m_n - m_i)).clamp(0.0, cap)
}

/// Net exchange intake per slot; inactive slots get 0.
///
/// Overlap means centre distance strictly below `d_b`. All transfers are
/// evaluated on the depots passed in, i.e. before anyone's update.
pub fn exchange_flows(
    depots: &[f64],
    positions: &[Vec2],
    active: &[bool],
    d_b: f64,
    k_e: f64,
    cap: f64,
    mode: ExchangeClip,
) -> Vec<f64> {
    let n = depots.len();
    let mut flow = vec![0.0; n];
    let lim = d_b * d_b;
    for i in 0..n {
        if !active[i] {
            continue;
        }
        for j in (i + 1)..n {
            if !active[j] {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if dx * dx + dy * dy >= lim {
                continue;
            }
            match mode {
                ExchangeClip::Antisymmetric => {
                    let t = (k_e * (depots[j] - depots[i])).clamp(-cap, cap);
                    flow[i] += t;
                    flow[j] -= t;
                }
                ExchangeClip::NonNegative => {
                    let t = k_e * (depots[j] - depots[i]);
                    flow[i] += t;
                    flow[j] -= t;
                }
            }
        }
    }
    if mode == ExchangeClip::NonNegative {
        flow.iter_mut().for_each(|f| *f = f.clamp(0.0, cap));
    }
    flow
}

pub fn metabolic_cost(s: f64, u: f64, e: f64, k_cs: f64, k_cu: f64, gamma: f64) -> f64 {
    k_cs * s.abs() + k_cu * u.abs() + gamma * e
}

pub fn apply_depot_update(e: f64, e_g: f64, e_e: f64, e_c: f64, e_max: f64) -> f64 {
    (e + e_g + e_e - e_c).clamp(0.0, e_max)
}

/// Birth, starvation and old-age thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifeThresholds {
    pub e_birth: f64,
    pub t_birth: u32,
    pub e_death: f64,
    pub t_death: u32,
    pub a_min_old: u32,
    pub a_max_old: u32,
}

impl LifeThresholds {
    pub fn from_config(cfg: &RolloutConfig) -> Self {
        Self {
            e_birth: cfg.e_birth,
            t_birth: cfg.t_birth,
            e_death: cfg.e_death,
            t_death: cfg.t_death,
            a_min_old: cfg.a_min_old,
            a_max_old: cfg.a_max_old,
        }
    }
}

/// Per-step elimination probability, rising linearly over the old-age window.
pub fn old_age_probability(age: u32, a_min: u32, a_max: u32) -> f64 {
    if age <= a_min {
        return 0.0;
    }
    ((f64::from(age) - f64::from(a_min)) / (f64::from(a_max) - f64::from(a_min))).clamp(0.0, 1.0)
}

/// Outcome of one lifecycle tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LifeEvents {
    pub birth_eligible: bool,
    pub starved: bool,
    pub old_age: bool,
}

impl LifeEvents {
    pub fn dies(&self) -> bool {
        self.starved || self.old_age
    }
}

/// Advances streaks and age for an active boid holding depot `e` and
/// draws the old-age trial. Immortals never starve or age out.
pub fn lifecycle_step<R: Rng>(
    life: &mut LifecycleState,
    e: f64,
    th: &LifeThresholds,
    rng: &mut R,
) -> LifeEvents {
    debug_assert!(life.active);
    life.birth_streak = if e >= th.e_birth { life.birth_streak + 1 } else { 0 };
    life.death_streak = if e <= th.e_death { life.death_streak + 1 } else { 0 };
    life.age += 1;
    let mut ev = LifeEvents {
        birth_eligible: life.birth_streak >= th.t_birth,
        ..Default::default()
    };
    if !life.immortal {
        ev.starved = life.death_streak >= th.t_death;
        let p = old_age_probability(life.age, th.a_min_old, th.a_max_old);
        ev.old_age = p > 0.0 && rng.random::<f64>() < p;
    }
    ev
}

/// Halves the parent's depot and returns a freshly initialised child.
///
/// The child lands uniformly in the disk of radius `d_spawn` around the
/// parent, faces a uniform heading and starts at rest with zeroed activity.
pub fn spawn_progeny<R: Rng>(
    parent: &mut BoidState,
    mutation: &MutationRule,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> BoidState {
    let radius = cfg.d_spawn * rng.random::<f64>().sqrt();
    let angle = rng.random::<f64>() * TAU;
    let q = clamp_norm(
        [
            parent.kin.q[0] + radius * angle.cos(),
            parent.kin.q[1] + radius * angle.sin(),
        ],
        cfg.q_max,
    );
    let theta = wrap_angle(rng.random_range(-PI..PI));
    let stats = MutationStats {
        z_bar: &parent.ctrl.z_bar,
        e_bar: parent.res.ebar,
        e_bar_g: parent.res.ebar_g,
        e_bar_e: parent.res.ebar_e,
        e_bar_c: parent.res.ebar_c,
        m: parent.res.m,
    };
    let j = mutation.apply(&parent.ctrl.j, &stats, rng);

    let half = 0.5 * parent.res.e;
    parent.res.e = half;
    parent.life.birth_streak = 0;

    BoidState {
        kin: KinematicState {
            q,
            v: [0.0, 0.0],
            theta,
            omega: 0.0,
        },
        ctrl: ControllerState::new(j),
        res: ResourceState::with_depot(half),
        life: LifecycleState {
            active: true,
            ..Default::default()
        },
        s: 0.0,
        u: 0.0,
        w: 0,
    }
}
