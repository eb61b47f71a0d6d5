use mls_core::analysis::{
    net_resource_series, proportion_series, role_proportions, roles_by_step, summaries_from_frames, Role,
};
use mls_core::engine::{BoidState, GroupController, LogOptions, RolloutLog, Simulation, World};
use mls_core::genome::GenomeLayout;
use mls_core::rng::{stream_rng, Stream};
use mls_core::RolloutConfig;
use rand::Rng;
use rand_distr::StandardNormal;

fn cfg() -> RolloutConfig {
    RolloutConfig {
        n_max: 16,
        n_min: 4,
        n: 8,
        r: 5,
        steps: 600,
        parallel_min_boids: 0,
        ..RolloutConfig::default()
    }
}

fn controller(cfg: &RolloutConfig, seed: u64) -> GroupController {
    let layout = GenomeLayout::from_config(cfg);
    let mut rng = stream_rng(seed, Stream::Test, 0, 0);
    let genes: Vec<f64> = (0..layout.len()).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    GroupController::from_genome(cfg, &genes).unwrap()
}

fn logged_run(cfg: &RolloutConfig, ctl: &GroupController, seed: u64, threads: usize) -> (World, RolloutLog) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut sim = Simulation::new(cfg, ctl, seed).with_logging(LogOptions::full(1));
        sim.run(cfg.steps);
        sim.into_parts()
    })
}

#[test]
fn logs_are_identical_across_thread_counts() {
    let cfg = cfg();
    let ctl = controller(&cfg, 1);
    let (wa, la) = logged_run(&cfg, &ctl, 5, 1);
    let (wb, lb) = logged_run(&cfg, &ctl, 5, 4);
    assert_eq!(wa, wb);
    assert_eq!(la, lb);
    assert!(wa.metrics.births > 0, "scenario should exercise births");
}

#[test]
fn streaming_metrics_match_logs() {
    let cfg = cfg();
    let ctl = controller(&cfg, 2);
    let (world, log) = logged_run(&cfg, &ctl, 8, 1);
    let from_summaries: f64 = log.summaries.iter().map(|s| s.pos_exchange).sum();
    let from_frames: f64 = log.frames.iter().filter(|f| f.active).map(|f| f.e_e.max(0.0)).sum();
    assert!((from_summaries - world.metrics.pos_exchange_mass).abs() < 1e-9);
    assert!((from_frames - world.metrics.pos_exchange_mass).abs() < 1e-9);
    let f_e: f64 = log.frames.iter().filter(|f| f.active).map(|f| f.e_g - f.e_c).sum();
    assert!((f_e - world.metrics.f_e).abs() < 1e-9 * world.metrics.f_e.abs().max(1.0));

    // Net-resource and role series rebuilt from raw frames.
    let rebuilt = summaries_from_frames(&log.frames);
    let a = net_resource_series(&log.summaries, cfg.n_max);
    let b = net_resource_series(&rebuilt, cfg.n_max);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9);
    }
    assert_eq!(proportion_series(&log.summaries), proportion_series(&rebuilt));
    for ((step, roles), (s2, p)) in roles_by_step(&log.frames).iter().zip(proportion_series(&log.summaries)) {
        assert_eq!(*step, s2);
        assert_eq!(role_proportions(roles), p);
        let active = roles.iter().filter(|r| r.is_some()).count();
        if active > 0 {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn population_bounds_hold_every_step() {
    let cfg = cfg();
    for seed in 0..3 {
        let ctl = controller(&cfg, 10 + seed);
        let (_, log) = logged_run(&cfg, &ctl, seed, 1);
        for s in &log.summaries {
            assert!(s.active >= cfg.n_min && s.active <= cfg.n_max, "step {} active {}", s.step, s.active);
        }
    }
}

#[test]
fn substrate_is_shared_and_untouched_by_births() {
    let cfg = cfg();
    let ctl = controller(&cfg, 3);
    let before = ctl.substrate.clone();
    let (world, _) = logged_run(&cfg, &ctl, 9, 1);
    assert!(world.metrics.births > 0);
    assert_eq!(ctl.substrate, before);
}

/// A reactivated slot must not inherit anything from a previous occupant.
#[test]
fn reused_slot_is_fully_reinitialised() {
    let cfg = cfg();
    let ctl = controller(&cfg, 4);
    let mut sim = Simulation::new(&cfg, &ctl, 21);
    sim.run(50);
    let mut clean = sim.world().clone();

    // Parent in slot 0 is forced to give birth this step.
    let parent = &mut clean.boids[0];
    parent.res.e = cfg.e_max;
    parent.life.birth_streak = cfg.t_birth - 1;
    let target = clean.boids.iter().position(|b| !b.active()).expect("a free slot");

    // Same world, but the free slot still holds a previous occupant's state.
    let mut dirty = clean.clone();
    let mut ghost = clean.boids[0].clone();
    ghost.life.active = false;
    ghost.life.age = 999;
    ghost.ctrl.z.iter_mut().for_each(|z| *z = 7.0);
    ghost.ctrl.j.iter_mut().for_each(|j| *j = -3.0);
    ghost.res.ebar_e_plus = 42.0;
    ghost.kin.v = [3.0, 4.0];
    dirty.boids[target] = ghost;

    let mut a = Simulation::from_world(&cfg, &ctl, clean);
    let mut b = Simulation::from_world(&cfg, &ctl, dirty);
    a.step();
    b.step();
    let child = &a.world().boids[target];
    assert!(child.active(), "birth should land in slot {target}");
    assert_eq!(child, &b.world().boids[target]);
    assert_eq!(a.world(), b.world());

    let fresh = BoidState::dormant(cfg.n);
    assert_eq!(child.life.age, 0);
    assert_eq!(child.life.birth_streak, 0);
    assert_eq!(child.life.death_streak, 0);
    assert!(!child.life.immortal);
    assert_eq!(child.ctrl.z, fresh.ctrl.z);
    assert_eq!(child.ctrl.z_bar, fresh.ctrl.z_bar);
    assert_eq!(child.kin.v, [0.0, 0.0]);
    assert_eq!(child.kin.omega, 0.0);
    assert_eq!(child.res.ebar_e_plus, 0.0);
    assert_eq!(child.res.e, a.world().boids[0].res.e);
}

#[test]
fn every_active_boid_has_one_role() {
    let cfg = cfg();
    let ctl = controller(&cfg, 6);
    let (_, log) = logged_run(&cfg, &ctl, 2, 1);
    for f in &log.frames {
        assert_eq!(f.active, f.role.is_some());
    }
    assert!(log.frames.iter().any(|f| f.role == Some(Role::Suboptimal) || f.role == Some(Role::Grazing)));
}
