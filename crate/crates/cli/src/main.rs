mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::commands::{absolute, execute};
use crate::manifest::{Invocation, RunManifest};

#[derive(Parser)]
#[command(name = "mls", version, about = "Train, run and analyse multi-level selection boid ecologies")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MLS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one value, e.g. `--set rollout.k_g=0.2`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise a group genome with CMA-ES, one run per seed.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of training seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// First training seed.
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long)]
        generations: Option<usize>,
        /// Leave the CMA-ES state out of checkpoints.
        #[arg(long)]
        no_cma_state: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one long rollout of a trained group and log every slot.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Log every k-th step.
        #[arg(long, default_value_t = 1)]
        frames_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare trained, substrate-only and random groups.
    Ablate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of rollout seeds per setting.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute roles, proportions and resource series from a trajectory log.
    Analyze {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Slot count used to normalise series; defaults to the largest slot seen.
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    InitConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn set(doc: &mut Value, section: &str, key: &str, value: Option<usize>) -> Result<()> {
    if let Some(v) = value {
        settings::set_path(doc, section, key, &v.to_string())?;
    }
    Ok(())
}

fn seed_list(base: u64, count: u64) -> Vec<u64> {
    (base..base + count).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seeds,
            seed_base,
            generations,
            no_cma_state,
            out,
        } => {
            let mut doc = settings::resolve(config.config.as_deref(), &config.sets)?;
            set(&mut doc, "train", "generations", generations)?;
            let cfg = settings::finish(doc)?;
            let inv = Invocation::Train {
                seeds: seed_list(seed_base, seeds),
                with_cma_state: !no_cma_state,
            };
            execute(inv, cfg, &out)?;
        }
        Command::Infer {
            checkpoint,
            config,
            steps,
            n_max,
            seed,
            frames_every,
            out,
        } => {
            let mut doc = settings::resolve(config.config.as_deref(), &config.sets)?;
            set(&mut doc, "rollout", "T", steps)?;
            set(&mut doc, "rollout", "n_max", n_max)?;
            let cfg = settings::finish(doc)?;
            let inv = Invocation::Infer {
                checkpoint: absolute(&checkpoint),
                seed,
                frames_every: frames_every.max(1),
            };
            execute(inv, cfg, &out)?;
        }
        Command::Ablate {
            checkpoint,
            config,
            seeds,
            seed_base,
            steps,
            n_max,
            out,
        } => {
            let mut doc = settings::resolve(config.config.as_deref(), &config.sets)?;
            set(&mut doc, "analysis", "T", steps)?;
            set(&mut doc, "analysis", "ablation_n_max", n_max)?;
            let cfg = settings::finish(doc)?;
            let inv = Invocation::Ablate {
                checkpoint: absolute(&checkpoint),
                seeds: seed_list(seed_base, seeds),
            };
            execute(inv, cfg, &out)?;
        }
        Command::Analyze {
            trajectory,
            config,
            n_max,
            out,
        } => {
            let doc = settings::resolve(config.config.as_deref(), &config.sets)?;
            let cfg = settings::finish(doc)?;
            let inv = Invocation::Analyze {
                trajectory: absolute(&trajectory),
                n_max,
            };
            execute(inv, cfg, &out)?;
        }
        Command::Replay { manifest, out } => {
            let m = RunManifest::read(&manifest)?;
            m.config.validate().context("manifest config")?;
            execute(m.invocation, m.config, &out)?;
        }
        Command::InitConfig { out } => {
            let text = mls_core::ExperimentConfig::default().to_json_pretty() + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
