//! Rollout orchestration over a fixed array of population slots.
//!
//! A step runs these phases in order:
//!
//! 1. freeze a snapshot of positions, depots and movement
//! 2. cast rays for every active boid
//! 3. CTRNN step, readout and noisy control
//! 4. motion integration and clamps
//! 5. movement filter and population mean movement
//! 6. grazing, exchange and metabolic channels against snapshot depots
//! 7. simultaneous depot update and moving averages
//! 8. metric accumulation and logging
//! 9. births in ascending slot order
//! 10. starvation deaths
//! 11. old-age eliminations
//! 12. advance the clock
//!
//! Randomness is keyed by `(seed, stream, step, slot)`, so the parallel
//! fan-out in phases 2-4 cannot change a single bit of the outcome.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{classify_role, Role};
use crate::config::RolloutConfig;
use crate::dynamics::{apply_control, integrate_step, wrap_angle, KinematicState, MotionLimits, Vec2};
use crate::ecology::{
    apply_depot_update, exchange_flows, grazing_gain, lifecycle_step, mean_movement, metabolic_cost,
    spawn_progeny, update_movement, LifeEvents, LifeThresholds, LifecycleState, ResourceState,
};
use crate::error::GenomeError;
use crate::genome::{unflatten, GenomeLayout};
use crate::neural::{ctrnn_advance, readout, ControllerState, MutationNet, MutationRule, Substrate};
use crate::rng::{stream_rng, Stream};
use crate::sensing::{write_observation, Body, BodySignals, RayCaster, RayReading};

/// Everything one population slot holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoidState {
    pub kin: KinematicState,
    pub ctrl: ControllerState,
    pub res: ResourceState,
    pub life: LifecycleState,
    /// Thrust and torque applied in the last step.
    pub s: f64,
    pub u: f64,
    /// Overlap count seen by the last observation.
    pub w: u32,
}

impl BoidState {
    /// An inactive slot.
    pub fn dormant(n: usize) -> Self {
        Self {
            kin: KinematicState::default(),
            ctrl: ControllerState::new(vec![0.0; n * n]),
            res: ResourceState::default(),
            life: LifecycleState::default(),
            s: 0.0,
            u: 0.0,
            w: 0,
        }
    }

    pub fn active(&self) -> bool {
        self.life.active
    }
}

/// Parameters shared by every boid of a group for a whole rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupController {
    pub substrate: Substrate,
    pub mutation: MutationRule,
}

impl GroupController {
    pub fn learned(substrate: Substrate, net: MutationNet, eta: f64) -> Self {
        Self {
            substrate,
            mutation: MutationRule::Learned { net, eta },
        }
    }

    /// Decodes a genome under the layout implied by `cfg`.
    pub fn from_genome(cfg: &RolloutConfig, genes: &[f64]) -> Result<Self, GenomeError> {
        let (sub, net) = unflatten(&GenomeLayout::from_config(cfg), genes)?;
        Ok(Self::learned(sub, net, cfg.eta))
    }
}

/// Streaming rollout accumulators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    /// Sum over steps and boids of `e_g - e_c`.
    pub f_e: f64,
    /// Sum over steps and active boids of age.
    pub f_a: f64,
    /// Sum over steps and boids of `max(0, e_e)`.
    pub pos_exchange_mass: f64,
    pub steps: u64,
    pub births: u64,
    pub deaths: u64,
    pub deferred_births: u64,
    pub peak_active: usize,
}

impl RolloutMetrics {
    pub fn fitness(&self, mu: f64) -> f64 {
        self.f_e + mu * self.f_a
    }
}

/// Population-level totals for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: u64,
    pub active: usize,
    /// `sum_i (e_g - e_c)`; divide by `N_max` for the per-slot average.
    pub net_gain: f64,
    /// `sum_i max(0, e_e)`.
    pub pos_exchange: f64,
    /// Active boids per role: exchange, grazing, suboptimal.
    pub roles: [u32; 3],
    pub births: u32,
    pub deaths: u32,
}

/// One slot at one logged step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub step: u64,
    pub slot: usize,
    pub active: bool,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub e: f64,
    pub e_g: f64,
    pub e_e: f64,
    pub e_c: f64,
    pub m: f64,
    pub role: Option<Role>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LogOptions {
    pub summaries: bool,
    /// Record every slot on steps divisible by this.
    pub frames_every: Option<usize>,
}

impl LogOptions {
    pub const NONE: LogOptions = LogOptions {
        summaries: false,
        frames_every: None,
    };

    pub fn summaries() -> Self {
        Self {
            summaries: true,
            frames_every: None,
        }
    }

    pub fn full(every: usize) -> Self {
        Self {
            summaries: true,
            frames_every: Some(every.max(1)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutLog {
    pub summaries: Vec<StepSummary>,
    pub frames: Vec<SlotRecord>,
}

/// Complete mutable state of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub seed: u64,
    pub step: u64,
    pub boids: Vec<BoidState>,
    pub metrics: RolloutMetrics,
}

impl World {
    pub fn active_count(&self) -> usize {
        self.boids.iter().filter(|b| b.active()).count()
    }
}

/// Places `n_min` immortals and leaves the other slots dormant.
pub fn init_rollout(cfg: &RolloutConfig, seed: u64) -> World {
    let n = cfg.n;
    let mut boids: Vec<BoidState> = (0..cfg.n_max).map(|_| BoidState::dormant(n)).collect();
    for (slot, boid) in boids.iter_mut().enumerate().take(cfg.n_min) {
        let mut rng = stream_rng(seed, Stream::Init, 0, slot as u64);
        let q = [
            rng.random_range(-cfg.q_init..=cfg.q_init),
            rng.random_range(-cfg.q_init..=cfg.q_init),
        ];
        let theta = wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let e = rng.random_range(cfg.e_init_min..=cfg.e_init_max);
        let j = (0..n * n).map(|_| rng.random_range(-cfg.j_init..=cfg.j_init)).collect();
        *boid = BoidState {
            kin: KinematicState {
                q,
                v: [0.0, 0.0],
                theta,
                omega: 0.0,
            },
            ctrl: ControllerState::new(j),
            res: ResourceState::with_depot(e),
            life: LifecycleState {
                active: true,
                immortal: true,
                ..Default::default()
            },
            s: 0.0,
            u: 0.0,
            w: 0,
        };
    }
    World {
        seed,
        step: 0,
        boids,
        metrics: RolloutMetrics {
            peak_active: cfg.n_min,
            ..Default::default()
        },
    }
}

/// Read-only context for the per-boid phases.
struct Perception<'a> {
    cfg: &'a RolloutConfig,
    ctl: &'a GroupController,
    caster: &'a RayCaster,
    limits: MotionLimits,
    bodies: &'a [Body],
    overlaps: &'a [u32],
    m_n: f64,
    seed: u64,
    step: u64,
}

impl Perception<'_> {
    /// Phases 2-4 (and the movement filter) for one active boid.
    fn act(&self, slot: usize, boid: &mut BoidState) {
        let cfg = self.cfg;
        let r = self.caster.rays();
        let mut readings = vec![RayReading::miss(cfg.d_max); r];
        let mut scratch = Vec::with_capacity(self.bodies.len());
        self.caster
            .cast_into(slot, self.bodies, boid.kin.theta, &mut scratch, &mut readings);
        let signals = BodySignals {
            v: boid.kin.v,
            omega: boid.kin.omega,
            m: boid.res.m,
            m_n: self.m_n,
            e: boid.res.e,
            e_g: boid.res.e_g,
            e_e: boid.res.e_e,
            e_c: boid.res.e_c,
            w: self.overlaps[slot],
        };
        let mut obs = vec![0.0; 2 * r + BodySignals::LEN];
        write_observation(&readings, &signals, &mut obs);

        let sub = &self.ctl.substrate;
        let mut sig = Vec::with_capacity(sub.n());
        ctrnn_advance(&mut boid.ctrl, sub, &obs, cfg.dt, cfg.tau_zbar, &mut sig);
        let (a_s, a_u) = readout(&boid.ctrl.z, &sub.readout);
        let mut rng = stream_rng(self.seed, Stream::Control, self.step, slot as u64);
        let noise: (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let (s, u) = apply_control(a_s, a_u, noise, cfg.epsilon, cfg.d_b);

        boid.res.m = update_movement(boid.res.m, boid.kin.v, boid.kin.omega, cfg.tau_m, cfg.dt);
        boid.kin = integrate_step(&boid.kin, s, u, cfg.lambda, cfg.dt, &self.limits);
        boid.s = s;
        boid.u = u;
        boid.w = self.overlaps[slot];
    }
}

/// Drives one rollout.
pub struct Simulation<'a> {
    cfg: &'a RolloutConfig,
    ctl: &'a GroupController,
    caster: RayCaster,
    thresholds: LifeThresholds,
    limits: MotionLimits,
    opts: LogOptions,
    world: World,
    log: RolloutLog,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a RolloutConfig, ctl: &'a GroupController, seed: u64) -> Self {
        Self::from_world(cfg, ctl, init_rollout(cfg, seed))
    }

    pub fn from_world(cfg: &'a RolloutConfig, ctl: &'a GroupController, world: World) -> Self {
        assert_eq!(world.boids.len(), cfg.n_max, "world does not match n_max");
        assert_eq!(ctl.substrate.obs_dim(), cfg.obs_dim(), "substrate does not match r");
        Self {
            cfg,
            ctl,
            caster: RayCaster::new(cfg.fov, cfg.r, cfg.d_max),
            thresholds: LifeThresholds::from_config(cfg),
            limits: MotionLimits {
                q_max: cfg.q_max,
                v_max: cfg.v_max,
                omega_max: cfg.omega_max,
            },
            opts: LogOptions::NONE,
            world,
            log: RolloutLog::default(),
        }
    }

    pub fn with_logging(mut self, opts: LogOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn metrics(&self) -> &RolloutMetrics {
        &self.world.metrics
    }

    pub fn log(&self) -> &RolloutLog {
        &self.log
    }

    /// Takes the frames logged so far, leaving summaries in place.
    pub fn drain_frames(&mut self) -> Vec<SlotRecord> {
        std::mem::take(&mut self.log.frames)
    }

    pub fn into_parts(self) -> (World, RolloutLog) {
        (self.world, self.log)
    }

    pub fn run(&mut self, steps: usize) -> RolloutMetrics {
        for _ in 0..steps {
            self.step();
        }
        self.world.metrics
    }

    pub fn step(&mut self) {
        let cfg = self.cfg;
        let n_slots = self.world.boids.len();
        let seed = self.world.seed;
        let t = self.world.step;

        // 1. Snapshot.
        let active: Vec<bool> = self.world.boids.iter().map(|b| b.active()).collect();
        let pre_pos: Vec<Vec2> = self.world.boids.iter().map(|b| b.kin.q).collect();
        let pre_e: Vec<f64> = self.world.boids.iter().map(|b| b.res.e).collect();
        let pre_m: Vec<f64> = self.world.boids.iter().map(|b| b.res.m).collect();
        let bodies: Vec<Body> = (0..n_slots)
            .map(|i| Body {
                q: pre_pos[i],
                radius: 0.5 * cfg.d_b,
                depot: pre_e[i],
                active: active[i],
            })
            .collect();
        let overlaps = crate::sensing::overlap_counts(&pre_pos, &active, cfg.d_b);
        let n_active = active.iter().filter(|&&a| a).count();

        // 2-4. Sense, think, move.
        let perception = Perception {
            cfg,
            ctl: self.ctl,
            caster: &self.caster,
            limits: self.limits,
            bodies: &bodies,
            overlaps: &overlaps,
            m_n: mean_movement(&pre_m, &active),
            seed,
            step: t,
        };
        if n_active >= cfg.parallel_min_boids {
            self.world
                .boids
                .par_iter_mut()
                .enumerate()
                .filter(|(_, b)| b.active())
                .for_each(|(i, b)| perception.act(i, b));
        } else {
            for (i, b) in self.world.boids.iter_mut().enumerate().filter(|(_, b)| b.active()) {
                perception.act(i, b);
            }
        }

        // 5. Mean movement after the filter update.
        let m_now: Vec<f64> = self.world.boids.iter().map(|b| b.res.m).collect();
        let m_n = mean_movement(&m_now, &active);

        // 6. Channels.
        let post_pos: Vec<Vec2>;
        let overlap_pos = if cfg.exchange_post_move {
            post_pos = self.world.boids.iter().map(|b| b.kin.q).collect();
            &post_pos
        } else {
            &pre_pos
        };
        let e_e = exchange_flows(&pre_e, overlap_pos, &active, cfg.d_b, cfg.k_e, cfg.e_e_max, cfg.exchange_clip);

        // 7-8. Depots, averages, metrics.
        let mut summary = StepSummary {
            step: t,
            active: n_active,
            net_gain: 0.0,
            pos_exchange: 0.0,
            roles: [0; 3],
            births: 0,
            deaths: 0,
        };
        let mut age_mass = 0.0;
        let frame = self
            .opts
            .frames_every
            .is_some_and(|k| t.is_multiple_of(k as u64));
        for (i, b) in self.world.boids.iter_mut().enumerate() {
            if !active[i] {
                if frame {
                    self.log.frames.push(SlotRecord {
                        step: t,
                        slot: i,
                        active: false,
                        x: 0.0,
                        y: 0.0,
                        theta: 0.0,
                        e: 0.0,
                        e_g: 0.0,
                        e_e: 0.0,
                        e_c: 0.0,
                        m: 0.0,
                        role: None,
                    });
                }
                continue;
            }
            let res = &mut b.res;
            res.e_g = grazing_gain(res.m, m_n, cfg.k_g, cfg.e_g_max);
            res.e_e = e_e[i];
            res.e_c = metabolic_cost(b.s, b.u, pre_e[i], cfg.k_cs, cfg.k_cu, cfg.gamma);
            res.e = apply_depot_update(pre_e[i], res.e_g, res.e_e, res.e_c, cfg.e_max);
            res.update_averages(cfg.tau_ebar, cfg.dt);

            summary.net_gain += res.e_g - res.e_c;
            summary.pos_exchange += res.e_e.max(0.0);
            age_mass += f64::from(b.life.age);
            let role = classify_role(res.ebar_e_plus, res.ebar_g, res.ebar_c);
            summary.roles[role.index()] += 1;
            if frame {
                self.log.frames.push(SlotRecord {
                    step: t,
                    slot: i,
                    active: true,
                    x: b.kin.q[0],
                    y: b.kin.q[1],
                    theta: b.kin.theta,
                    e: res.e,
                    e_g: res.e_g,
                    e_e: res.e_e,
                    e_c: res.e_c,
                    m: res.m,
                    role: Some(role),
                });
            }
        }
        let metrics = &mut self.world.metrics;
        metrics.f_e += summary.net_gain;
        metrics.f_a += age_mass;
        metrics.pos_exchange_mass += summary.pos_exchange;

        // 9-11. Lifecycle.
        let events: Vec<(usize, LifeEvents)> = self
            .world
            .boids
            .iter_mut()
            .enumerate()
            .filter(|(_, b)| b.active())
            .map(|(i, b)| {
                let mut rng = stream_rng(seed, Stream::OldAge, t, i as u64);
                (i, lifecycle_step(&mut b.life, b.res.e, &self.thresholds, &mut rng))
            })
            .collect();
        for &(parent, _) in events.iter().filter(|(_, ev)| ev.birth_eligible) {
            let Some(free) = self.world.boids.iter().position(|b| !b.active()) else {
                self.world.metrics.deferred_births += 1;
                continue;
            };
            let mut rng = stream_rng(seed, Stream::Spawn, t, parent as u64);
            let child = spawn_progeny(&mut self.world.boids[parent], &self.ctl.mutation, cfg, &mut rng);
            self.world.boids[free] = child;
            summary.births += 1;
        }
        let starved = events.iter().filter(|(_, ev)| ev.starved);
        let aged = events.iter().filter(|(_, ev)| ev.old_age && !ev.starved);
        for &(slot, _) in starved.chain(aged) {
            debug_assert!(!self.world.boids[slot].life.immortal);
            self.world.boids[slot] = BoidState::dormant(cfg.n);
            summary.deaths += 1;
        }

        // 12. Clock.
        let metrics = &mut self.world.metrics;
        metrics.births += u64::from(summary.births);
        metrics.deaths += u64::from(summary.deaths);
        metrics.steps += 1;
        metrics.peak_active = metrics.peak_active.max(self.world.boids.iter().filter(|b| b.active()).count());
        self.world.step += 1;
        if self.opts.summaries {
            self.log.summaries.push(summary);
        }
    }
}

/// Runs a `cfg.steps`-step rollout of the group encoded by `genes`.
pub fn run_rollout(cfg: &RolloutConfig, genes: &[f64], seed: u64) -> Result<RolloutMetrics, GenomeError> {
    let ctl = GroupController::from_genome(cfg, genes)?;
    Ok(Simulation::new(cfg, &ctl, seed).run(cfg.steps))
}

/// Writes per-step summaries as `step,active,net_gain,pos_exchange,births,deaths`.
pub fn write_metrics_csv<W: std::io::Write>(
    mut out: W,
    summaries: &[StepSummary],
) -> std::io::Result<()> {
    writeln!(out, "step,active,net_gain,pos_exchange,births,deaths")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.step, s.active, s.net_gain, s.pos_exchange, s.births, s.deaths
        )?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str = "step,slot,active,x,y,theta,e,e_g,e_e,e_c,m,role";

/// Writes frames as `step,slot,active,x,y,theta,e,e_g,e_e,e_c,m,role`.
pub fn write_trajectory_csv<W: std::io::Write>(mut out: W, frames: &[SlotRecord]) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    write_trajectory_rows(out, frames)
}

/// Rows only, for streaming writers.
pub fn write_trajectory_rows<W: std::io::Write>(mut out: W, frames: &[SlotRecord]) -> std::io::Result<()> {
    for f in frames {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            f.step,
            f.slot,
            u8::from(f.active),
            f.x,
            f.y,
            f.theta,
            f.e,
            f.e_g,
            f.e_e,
            f.e_c,
            f.m,
            Role::code(f.role)
        )?;
    }
    Ok(())
}
