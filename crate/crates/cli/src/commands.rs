use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use mls_core::analysis::{
    mean, net_resource_series, positive_exchange_series, proportion_series, read_trajectory_csv, run_ablation,
    smooth_trailing, summaries_from_frames, write_ablation_csv, write_proportions_csv, write_roles_csv,
    write_roles_rows, AblationSetting,
};
use mls_core::engine::{write_metrics_csv, write_trajectory_rows, TRAJECTORY_HEADER};
use mls_core::evolution::{write_generations_csv, RolloutEvaluator};
use mls_core::{Checkpoint, ExperimentConfig, GroupController, LogOptions, Simulation, Trainer};

use crate::manifest::{Invocation, RunManifest};
use crate::settings::require_dir;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_checkpoint(path: &Path, cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let ckpt = Checkpoint::read(path)?;
    ckpt.check_compatible(&cfg.rollout)?;
    Ok(ckpt)
}

/// Absolute form of an input path so manifests replay from any directory.
pub fn absolute(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Runs an invocation and writes its manifest into `out`.
pub fn execute(invocation: Invocation, cfg: ExperimentConfig, out: &Path) -> Result<RunManifest> {
    require_dir(out)?;
    let start = Instant::now();
    let mut manifest = RunManifest::new(invocation.clone(), cfg.clone());
    match &invocation {
        Invocation::Train { seeds, with_cma_state } => train(&cfg, seeds, *with_cma_state, out, &mut manifest)?,
        Invocation::Infer {
            checkpoint,
            seed,
            frames_every,
        } => infer(&cfg, checkpoint, *seed, *frames_every, out, &mut manifest)?,
        Invocation::Ablate { checkpoint, seeds } => ablate(&cfg, checkpoint, seeds, out, &mut manifest)?,
        Invocation::Analyze { trajectory, n_max } => analyze(&cfg, trajectory, *n_max, out, &mut manifest)?,
    }
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}

fn train(cfg: &ExperimentConfig, seeds: &[u64], with_cma: bool, out: &Path, manifest: &mut RunManifest) -> Result<()> {
    let mut all = Vec::new();
    for &seed in seeds {
        let mut trainer = Trainer::new(&cfg.rollout, &cfg.train, seed, RolloutEvaluator { cfg: cfg.rollout.clone() });
        let name = format!("checkpoint_seed{seed}.json");
        let path = out.join(&name);
        for g in 1..=cfg.train.generations {
            let rec = trainer.step()?;
            info!(
                "seed {seed} generation {g}/{}: best f {:.4} mean f {:.4} e_eplus_mean {:.3e}",
                cfg.train.generations, rec.best_f, rec.mean_f, rec.e_eplus_mean
            );
            all.push(rec);
            if cfg.train.checkpoint_every > 0 && g % cfg.train.checkpoint_every == 0 {
                trainer.checkpoint(with_cma).write(&path)?;
            }
        }
        trainer.checkpoint(with_cma).write(&path)?;
        manifest.checkpoints.push(PathBuf::from(&name));
        manifest.outputs.push(PathBuf::from(name));
    }
    let mut w = create(out, "generations.csv")?;
    write_generations_csv(&mut w, &all)?;
    w.flush()?;
    manifest.outputs.push("generations.csv".into());
    Ok(())
}

fn infer(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    seed: u64,
    frames_every: usize,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint, cfg)?;
    manifest.checkpoints.push(checkpoint.to_path_buf());
    let rc = &cfg.rollout;
    let ctl = GroupController::from_genome(rc, &ckpt.genome.0)?;
    let mut sim = Simulation::new(rc, &ctl, seed).with_logging(LogOptions::full(frames_every));
    let mut traj = create(out, "trajectory.csv")?;
    let mut roles = create(out, "roles.csv")?;
    writeln!(traj, "{TRAJECTORY_HEADER}")?;
    write_roles_csv(&mut roles, &[])?;
    for _ in 0..rc.steps {
        sim.step();
        let frames = sim.drain_frames();
        write_trajectory_rows(&mut traj, &frames)?;
        write_roles_rows(&mut roles, &frames)?;
    }
    traj.flush()?;
    roles.flush()?;
    let summaries = &sim.log().summaries;
    let mut w = create(out, "metrics.csv")?;
    write_metrics_csv(&mut w, summaries)?;
    w.flush()?;
    let mut w = create(out, "proportions.csv")?;
    write_proportions_csv(&mut w, &proportion_series(summaries))?;
    w.flush()?;
    manifest.outputs.extend(["trajectory.csv", "roles.csv", "metrics.csv", "proportions.csv"].map(PathBuf::from));
    let m = sim.metrics();
    println!(
        "steps {} births {} deaths {} final active {} mean e+ {:.6}",
        m.steps,
        m.births,
        m.deaths,
        sim.world().active_count(),
        mean(&net_resource_series(summaries, rc.n_max))
    );
    Ok(())
}

fn ablate(cfg: &ExperimentConfig, checkpoint: &Path, seeds: &[u64], out: &Path, manifest: &mut RunManifest) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint, cfg)?;
    manifest.checkpoints.push(checkpoint.to_path_buf());
    let series = run_ablation(&ckpt.genome.0, &cfg.rollout, &cfg.analysis, seeds)?;
    let mut w = create(out, "ablation.csv")?;
    write_ablation_csv(&mut w, &series, false)?;
    w.flush()?;
    let mut w = create(out, "ablation_smoothed.csv")?;
    write_ablation_csv(&mut w, &series, true)?;
    w.flush()?;
    let mut w = create(out, "ablation_summary.csv")?;
    writeln!(w, "setting,seed,mean_e_plus,mean_e_eplus")?;
    for s in &series {
        writeln!(w, "{},{},{},{}", s.setting.name(), s.seed, s.mean_e_plus(), s.mean_e_eplus())?;
    }
    w.flush()?;
    manifest.outputs.extend(["ablation.csv", "ablation_smoothed.csv", "ablation_summary.csv"].map(PathBuf::from));
    for setting in AblationSetting::ALL {
        let sel: Vec<_> = series.iter().filter(|s| s.setting == setting).collect();
        let e_plus: Vec<f64> = sel.iter().map(|s| s.mean_e_plus()).collect();
        let e_eplus: Vec<f64> = sel.iter().map(|s| s.mean_e_eplus()).collect();
        println!(
            "{:<15} mean e+ {:>10.6}  mean e(e+) {:>10.6}  ({} seeds)",
            setting.name(),
            mean(&e_plus),
            mean(&e_eplus),
            sel.len()
        );
    }
    Ok(())
}

fn analyze(
    cfg: &ExperimentConfig,
    trajectory: &Path,
    n_max: Option<usize>,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let file = File::open(trajectory).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::anyhow!("file not found: {}", trajectory.display()),
        _ => anyhow::anyhow!("cannot read {}: {e}", trajectory.display()),
    })?;
    let frames = read_trajectory_csv(std::io::BufReader::new(file))?;
    let n_max = n_max.unwrap_or_else(|| frames.iter().map(|f| f.slot + 1).max().unwrap_or(0)).max(1);
    let violations = frames.iter().filter(|f| f.active != f.role.is_some()).count();
    let summaries = summaries_from_frames(&frames);
    let e_plus = net_resource_series(&summaries, n_max);
    let e_eplus = positive_exchange_series(&summaries, n_max);
    let bins = cfg.analysis.smooth_bins;
    let (e_plus_s, e_eplus_s) = (smooth_trailing(&e_plus, bins), smooth_trailing(&e_eplus, bins));

    let mut w = create(out, "roles.csv")?;
    write_roles_csv(&mut w, &frames)?;
    w.flush()?;
    let mut w = create(out, "proportions.csv")?;
    write_proportions_csv(&mut w, &proportion_series(&summaries))?;
    w.flush()?;
    let mut w = create(out, "series.csv")?;
    writeln!(w, "step,active,e_plus,e_eplus,e_plus_smoothed,e_eplus_smoothed")?;
    for (k, s) in summaries.iter().enumerate() {
        writeln!(w, "{},{},{},{},{},{}", s.step, s.active, e_plus[k], e_eplus[k], e_plus_s[k], e_eplus_s[k])?;
    }
    w.flush()?;
    manifest.outputs.extend(["roles.csv", "proportions.csv", "series.csv"].map(PathBuf::from));
    println!(
        "{} logged steps, n_max {n_max}, mean e+ {:.6}, mean e(e+) {:.6}, {violations} role/activity mismatches",
        summaries.len(),
        mean(&e_plus),
        mean(&e_eplus)
    );
    if violations > 0 {
        anyhow::bail!("{violations} rows violate the one-role-per-active-boid invariant");
    }
    Ok(())
}
