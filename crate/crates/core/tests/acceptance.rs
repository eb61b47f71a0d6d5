//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::io::Write as _;
use std::time::{Duration, Instant};

use mls_core::analysis::{mean, role_proportions, run_ablation, smooth_trailing, AblationSeries, AblationSetting, Role};
use mls_core::dynamics::{apply_control, integrate_step, KinematicState, MotionLimits};
use mls_core::ecology::exchange_flows;
use mls_core::engine::{write_metrics_csv, GroupController, LogOptions, Simulation};
use mls_core::evolution::{cma::parent_count, evaluate_genome, scenario_seeds, Checkpoint, CmaState, GenerationRecord, RolloutEvaluator, Trainer};
use mls_core::genome::{flatten, unflatten, GenomeLayout};
use mls_core::rng::{stream_rng, Stream};
use mls_core::sensing::{Body, RayCaster};
use mls_core::{AnalysisConfig, ExchangeClip, RolloutConfig, TrainConfig};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "[{}] {:>2} {} ({:.2?}): {}",
        if o.pass { "PASS" } else { "FAIL" },
        id,
        name,
        elapsed,
        o.detail
    );
    std::io::stdout().flush().ok();
}

fn random_genome(layout: &GenomeLayout, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Test, 1, 0);
    (0..layout.len()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

// 1
fn zero_sum_exchange() -> Outcome {
    let cfg = RolloutConfig::default();
    let mut rng = stream_rng(1, Stream::Test, 0, 0);
    let mut worst = 0.0f64;
    let mut min_overlaps = usize::MAX;
    for _ in 0..100 {
        let n = 20;
        let depots: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..cfg.e_max)).collect();
        let box_half = cfg.d_b;
        let pos: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-box_half..box_half), rng.random_range(-box_half..box_half)])
            .collect();
        let active = vec![true; n];
        let mut overlaps = 0;
        for i in 0..n {
            for j in i + 1..n {
                let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
                overlaps += usize::from(d < cfg.d_b);
            }
        }
        min_overlaps = min_overlaps.min(overlaps);
        let flows = exchange_flows(&depots, &pos, &active, cfg.d_b, cfg.k_e, cfg.e_e_max, ExchangeClip::Antisymmetric);
        worst = worst.max(flows.iter().sum::<f64>().abs());
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max |sum e_e| = {worst:.3e} over 100 steps, >= {min_overlaps} overlapping pairs per step (tol 1e-9)"),
    }
}

/// Independent nearest-intersection oracle.
fn oracle_ray(origin: [f64; 2], angle: f64, bodies: &[Body], skip: usize, d_max: f64) -> (Option<usize>, f64) {
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut best: (Option<usize>, f64) = (None, d_max);
    for (j, b) in bodies.iter().enumerate() {
        if j == skip || !b.active {
            continue;
        }
        let (ox, oy) = (origin[0] - b.q[0], origin[1] - b.q[1]);
        let qa = dx * dx + dy * dy;
        let qb = 2.0 * (ox * dx + oy * dy);
        let qc = ox * ox + oy * oy - b.radius * b.radius;
        let t = if qc <= 0.0 {
            0.0
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                continue;
            }
            let t0 = (-qb - disc.sqrt()) / (2.0 * qa);
            if t0 < 0.0 {
                continue;
            }
            t0
        };
        if t <= d_max && (best.0.is_none() || t < best.1) {
            best = (Some(j), t);
        }
    }
    best
}

// 2
fn sensing_oracle() -> Outcome {
    let cfg = RolloutConfig::default();
    let caster = RayCaster::new(cfg.fov, cfg.r, cfg.d_max);
    let mut rng = stream_rng(2, Stream::Test, 0, 0);
    let mut id_mismatch = 0;
    let mut worst = 0.0f64;
    let mut hits = 0usize;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let span = rng.random_range(20.0..200.0);
        let bodies: Vec<Body> = (0..n)
            .map(|_| Body {
                q: [rng.random_range(-span..span), rng.random_range(-span..span)],
                radius: 0.5 * cfg.d_b,
                depot: rng.random_range(0.0..cfg.e_max),
                active: rng.random_bool(0.85),
            })
            .collect();
        let me = rng.random_range(0..n);
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let got = caster.cast(me, &bodies, heading);
        for (k, reading) in got.iter().enumerate() {
            let angle = heading - 0.5 * cfg.fov + k as f64 * cfg.fov / (cfg.r - 1) as f64;
            let (id, d) = oracle_ray(bodies[me].q, angle, &bodies, me, cfg.d_max);
            if id != reading.hit {
                id_mismatch += 1;
            }
            hits += usize::from(id.is_some());
            worst = worst.max((d - reading.d).abs());
        }
    }
    Outcome {
        pass: id_mismatch == 0 && worst <= 1e-9,
        detail: format!("{id_mismatch} hit mismatches, max |dd| = {worst:.3e} over 11000 rays ({hits} hits)"),
    }
}

fn metrics_csv(cfg: &RolloutConfig, ctl: &GroupController, seed: u64) -> Vec<u8> {
    let mut sim = Simulation::new(cfg, ctl, seed).with_logging(LogOptions::summaries());
    sim.run(cfg.steps);
    let mut out = Vec::new();
    write_metrics_csv(&mut out, &sim.log().summaries).unwrap();
    writeln!(out, "{:?}", sim.metrics()).unwrap();
    out
}

// 3
fn determinism() -> Outcome {
    // Force the within-rollout parallel path regardless of population size.
    let cfg = RolloutConfig {
        parallel_min_boids: 0,
        ..RolloutConfig::default()
    };
    let genes = random_genome(&GenomeLayout::from_config(&cfg), 0.1, 3);
    let ctl = GroupController::from_genome(&cfg, &genes).unwrap();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let a = one.install(|| metrics_csv(&cfg, &ctl, 11));
    let b = many.install(|| metrics_csv(&cfg, &ctl, 11));
    let c = many.install(|| metrics_csv(&cfg, &ctl, 11));
    Outcome {
        pass: a == b && b == c,
        detail: format!(
            "T={} N_max={}: 1 vs {threads} threads identical = {}, rerun identical = {} ({} bytes)",
            cfg.steps,
            cfg.n_max,
            a == b,
            b == c,
            a.len()
        ),
    }
}

fn integrate(cfg: &RolloutConfig, dt: f64, steps: usize) -> KinematicState {
    let (s, u) = apply_control(0.8, 0.4, (0.0, 0.0), cfg.epsilon, cfg.d_b);
    let mut st = KinematicState {
        q: [0.0, 0.0],
        v: [1.0, -0.5],
        theta: 0.3,
        omega: 0.2,
    };
    for _ in 0..steps {
        st = integrate_step(&st, s, u, cfg.lambda, dt, &MotionLimits::UNBOUNDED);
    }
    st
}

fn err(a: &KinematicState, b: &KinematicState) -> f64 {
    ((a.q[0] - b.q[0]).powi(2) + (a.q[1] - b.q[1]).powi(2) + (a.v[0] - b.v[0]).powi(2) + (a.v[1] - b.v[1]).powi(2)).sqrt()
}

// 4
fn integrator_order() -> Outcome {
    let cfg = RolloutConfig::default();
    let dt = cfg.dt;
    let reference = integrate(&cfg, dt / 4096.0, 100 * 4096);
    let coarse = err(&integrate(&cfg, dt, 100), &reference);
    let fine = err(&integrate(&cfg, dt / 2.0, 200), &reference);
    let ratio = fine / coarse;
    Outcome {
        pass: (0.4..=0.6).contains(&ratio),
        detail: format!("err(dt)={coarse:.4e}, err(dt/2)={fine:.4e}, ratio {ratio:.4} (want [0.4, 0.6])"),
    }
}

// 5
fn cma_sphere() -> Outcome {
    let mut gens = Vec::new();
    for seed in 0..3 {
        let mut s = CmaState::new(vec![1.0; 10], 0.3, 16, parent_count(16, 0.3), seed);
        let mut reached = None;
        for g in 1..=150 {
            let xs = s.ask();
            let f: Vec<f64> = xs.iter().map(|x| -x.iter().map(|v| v * v).sum::<f64>()).collect();
            s.tell(&xs, &f).unwrap();
            if s.mean_slice().iter().map(|v| v * v).sum::<f64>() < 1e-8 {
                reached = Some(g);
                break;
            }
        }
        gens.push(reached);
    }
    Outcome {
        pass: gens.iter().all(Option::is_some),
        detail: format!("generations to sum x^2 < 1e-8 per seed: {gens:?} (limit 150)"),
    }
}

struct DeskRun {
    records: Vec<GenerationRecord>,
    checkpoint: Checkpoint,
}

fn desk_config() -> (RolloutConfig, TrainConfig) {
    let rc = RolloutConfig {
        n_max: 20,
        steps: 800,
        ..RolloutConfig::default()
    };
    let tc = TrainConfig {
        population: 16,
        scenarios: 1,
        generations: 100,
        ..TrainConfig::default()
    };
    (rc, tc)
}

fn desk_training() -> Vec<DeskRun> {
    let (rc, tc) = desk_config();
    (0..3)
        .map(|seed| {
            let mut t = Trainer::new(&rc, &tc, seed, RolloutEvaluator { cfg: rc.clone() });
            let records = t.run(tc.generations).unwrap();
            DeskRun {
                records,
                checkpoint: t.checkpoint(false),
            }
        })
        .collect()
}

// 6
fn training_trend(runs: &[DeskRun], bins: usize) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let best: Vec<f64> = r.records.iter().map(|x| x.best_f).collect();
        let sm = smooth_trailing(&best, bins);
        let (first, last) = (sm[0], sm[sm.len() - 1]);
        wins += usize::from(last > first);
        parts.push(format!("{first:.1}->{last:.1}"));
    }
    Outcome {
        pass: wins >= 2,
        detail: format!("smoothed best f g1->g100: [{}], rising in {wins}/3 (need 2)", parts.join(", ")),
    }
}

// 7
fn exchange_trend(runs: &[DeskRun], bins: usize) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let e: Vec<f64> = r.records.iter().map(|x| x.e_eplus_mean).collect();
        let sm = smooth_trailing(&e, bins);
        let first = mean(&sm[..20]);
        let last = mean(&sm[sm.len() - 20..]);
        wins += usize::from(last >= first);
        parts.push(format!("{first:.3e}->{last:.3e}"));
    }
    Outcome {
        pass: wins >= 2,
        detail: format!(
            "smoothed e_eplus_mean first20->last20: [{}], non-decreasing in {wins}/3 (need 2; reference trend is over 2000 generations)",
            parts.join(", ")
        ),
    }
}

fn best_run(runs: &[DeskRun]) -> &DeskRun {
    runs.iter()
        .max_by(|a, b| {
            let fa = a.checkpoint.header.fitness.unwrap_or(f64::NEG_INFINITY);
            let fb = b.checkpoint.header.fitness.unwrap_or(f64::NEG_INFINITY);
            fa.total_cmp(&fb)
        })
        .expect("three runs")
}

// 8
fn ablation_order(runs: &[DeskRun]) -> Outcome {
    let (rc, _) = desk_config();
    let analysis = AnalysisConfig {
        ablation_steps: 2000,
        ablation_n_max: 40,
        ..AnalysisConfig::default()
    };
    let seeds = [0u64, 1, 2];
    let genes = best_run(runs).checkpoint.genome.0.clone();
    let series = run_ablation(&genes, &rc, &analysis, &seeds).unwrap();
    let pick = |s: AblationSetting, seed: u64| -> &AblationSeries {
        series.iter().find(|x| x.setting == s && x.seed == seed).unwrap()
    };
    let mut ordered = 0;
    let mut random_ok = true;
    let mut parts = Vec::new();
    for &seed in &seeds {
        let f = pick(AblationSetting::Full, seed).mean_e_plus();
        let so = pick(AblationSetting::SubstrateOnly, seed).mean_e_plus();
        let ra = pick(AblationSetting::RandomAll, seed).mean_e_plus();
        ordered += usize::from(f >= so && so >= ra);
        random_ok &= ra.abs() <= 0.05;
        parts.push(format!("seed {seed}: {f:.4}/{so:.4}/{ra:.4}"));
    }
    let rows_ok = series.iter().all(|s| s.e_plus.len() == analysis.ablation_steps);
    Outcome {
        pass: ordered >= 2 && random_ok && rows_ok,
        detail: format!(
            "mean e+ full/substrate_only/random_all [{}]; ordered in {ordered}/3 (need 2), random_all within 0.05 of 0: {random_ok}",
            parts.join("; ")
        ),
    }
}

// 9
fn role_partition(runs: &[DeskRun]) -> Outcome {
    let rc = RolloutConfig {
        n_max: 40,
        steps: 2000,
        ..desk_config().0
    };
    let ctl = GroupController::from_genome(&rc, &best_run(runs).checkpoint.genome.0).unwrap();
    let mut sim = Simulation::new(&rc, &ctl, 7).with_logging(LogOptions::full(1));
    sim.run(rc.steps);
    let log = sim.log();
    let mut violations = 0usize;
    let mut worst_sum = 0.0f64;
    let mut both = 0usize;
    let burn_in = rc.steps / 4;
    for (t, summary) in log.summaries.iter().enumerate() {
        let frames = &log.frames[t * rc.n_max..(t + 1) * rc.n_max];
        let mut counts = [0u32; 3];
        for f in frames {
            match (f.active, f.role) {
                (true, Some(r)) => counts[r.index()] += 1,
                (false, None) => {}
                _ => violations += 1,
            }
        }
        let active = frames.iter().filter(|f| f.active).count();
        if counts != summary.roles || active != summary.active {
            violations += 1;
        }
        if active > 0 {
            let roles: Vec<Option<Role>> = frames.iter().map(|f| f.role).collect();
            worst_sum = worst_sum.max((role_proportions(&roles).iter().sum::<f64>() - 1.0).abs());
        }
        if t >= burn_in && counts[Role::Exchange.index()] > 0 && counts[Role::Grazing.index()] > 0 {
            both += 1;
        }
    }
    let post = rc.steps - burn_in;
    Outcome {
        pass: violations == 0 && worst_sum <= 1e-12,
        detail: format!(
            "{violations} partition violations, max |sum p - 1| = {worst_sum:.1e}; exchange and grazing co-occupied in {both}/{post} post-burn-in steps ({:.1}%)",
            100.0 * both as f64 / post as f64
        ),
    }
}

// 10
fn fitness_decomposition(runs: &[DeskRun]) -> Outcome {
    let (rc, _) = desk_config();
    let mu_ok = rc.mu == 5e-8;
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for r in runs {
        for rec in &r.records {
            for k in 0..rec.f.len() {
                worst = worst.max((rec.f[k] - (rec.f_e[k] + rc.mu * rec.f_a[k])).abs());
                count += 1;
            }
        }
    }
    // Multi-scenario averaging.
    let genes = &best_run(runs).checkpoint.genome.0;
    let ev = evaluate_genome(genes, &rc, &scenario_seeds(5, 0, 3, false)).unwrap();
    worst = worst.max((ev.f - (ev.f_e + rc.mu * ev.f_a)).abs());
    count += 1;
    Outcome {
        pass: mu_ok && worst <= 1e-9,
        detail: format!("{count} evaluations, max |f - (f_e + mu f_a)| = {worst:.3e}, mu = {:e}", rc.mu),
    }
}

// 11
fn genome_codec() -> Outcome {
    let layout = GenomeLayout::from_config(&RolloutConfig::default());
    let mut failures = 0;
    for k in 0..100 {
        let genes = random_genome(&layout, 3.0, 100 + k);
        let (sub, net) = unflatten(&layout, &genes).unwrap();
        let back = flatten(&sub, &net).0;
        if back.iter().map(|x| x.to_bits()).ne(genes.iter().map(|x| x.to_bits())) {
            failures += 1;
        }
    }
    Outcome {
        pass: failures == 0 && layout.len() == 1873,
        detail: format!("{failures}/100 roundtrip failures, genome length {} (want 1873)", layout.len()),
    }
}

fn main() {
    let mut failed = Vec::new();
    let mut run = |id: u32, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let mut o = f();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                o.pass = false;
                o.detail.push_str(&format!("; exceeded runtime limit {limit:?}"));
            }
        }
        report(id, name, elapsed, &o);
        if !o.pass {
            failed.push(id);
        }
    };
    run(1, "zero-sum exchange", Some(Duration::from_secs(1)), &mut zero_sum_exchange);
    run(2, "sensing oracle equivalence", Some(Duration::from_secs(10)), &mut sensing_oracle);
    run(3, "determinism across threads", Some(Duration::from_secs(30)), &mut determinism);
    run(4, "integrator order", None, &mut integrator_order);
    run(5, "CMA-ES sphere", Some(Duration::from_secs(5)), &mut cma_sphere);

    let start = Instant::now();
    let runs = desk_training();
    println!("       desk-scale training, 3 seeds x 100 generations: {:.2?}", start.elapsed());
    let bins = AnalysisConfig::default().generation_bins;
    run(6, "desk-scale training trend", None, &mut || training_trend(&runs, bins));
    run(7, "exchange-usage trend", None, &mut || exchange_trend(&runs, bins));
    run(8, "ablation ordering", None, &mut || ablation_order(&runs));
    run(9, "role partition", None, &mut || role_partition(&runs));
    run(10, "fitness decomposition", None, &mut || fitness_decomposition(&runs));
    run(11, "genome codec", None, &mut genome_codec);

    if failed.is_empty() {
        println!("acceptance: 11/11 criteria passed");
    } else {
        println!("acceptance: {} of 11 criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
}
