//! Multi-scenario fitness evaluation and the ask/evaluate/tell loop.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::generation_exchange_metric;
use crate::config::{RolloutConfig, TrainConfig};
use crate::engine::{run_rollout, RolloutMetrics};
use crate::error::{GenomeError, Result};
use crate::evolution::checkpoint::Checkpoint;
use crate::evolution::cma::{parent_count, rank_descending, CmaState};
use crate::genome::{Genome, GenomeLayout};
use crate::rng::{derive_seed, Stream};

/// Scenario-averaged fitness of one genome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub f: f64,
    pub f_e: f64,
    pub f_a: f64,
    /// Mean per-rollout sum of `max(0, e_e)`.
    pub pos_exchange: f64,
}

impl Evaluation {
    pub fn average(rollouts: &[RolloutMetrics], mu: f64) -> Self {
        let s = rollouts.len() as f64;
        let mean = |get: &dyn Fn(&RolloutMetrics) -> f64| rollouts.iter().map(get).sum::<f64>() / s;
        Self {
            f: mean(&|m| m.fitness(mu)),
            f_e: mean(&|m| m.f_e),
            f_a: mean(&|m| m.f_a),
            pos_exchange: mean(&|m| m.pos_exchange_mass),
        }
    }
}

/// Source of rollout outcomes. The trainer only sees this trait, so tests
/// can stub out the simulator.
pub trait Evaluator: Sync {
    fn rollout(&self, genes: &[f64], seed: u64) -> Result<RolloutMetrics, GenomeError>;
}

/// Evaluates genomes with the full simulator.
#[derive(Debug, Clone)]
pub struct RolloutEvaluator {
    pub cfg: RolloutConfig,
}

impl Evaluator for RolloutEvaluator {
    fn rollout(&self, genes: &[f64], seed: u64) -> Result<RolloutMetrics, GenomeError> {
        run_rollout(&self.cfg, genes, seed)
    }
}

/// Runs one rollout per scenario seed and averages.
pub fn evaluate_genome(genes: &[f64], cfg: &RolloutConfig, scenario_seeds: &[u64]) -> Result<Evaluation, GenomeError> {
    let runs = scenario_seeds
        .par_iter()
        .map(|&s| run_rollout(cfg, genes, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Evaluation::average(&runs, cfg.mu))
}

/// Scenario seeds for one generation. With `fixed` every generation reuses
/// the generation-0 seeds.
pub fn scenario_seeds(train_seed: u64, generation: u64, count: usize, fixed: bool) -> Vec<u64> {
    let g = if fixed { 0 } else { generation };
    (0..count as u64)
        .map(|s| derive_seed(train_seed, Stream::Scenario, g, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 1-based index of the generation just evaluated.
    pub generation: u64,
    pub seed: u64,
    pub f: Vec<f64>,
    pub f_e: Vec<f64>,
    pub f_a: Vec<f64>,
    pub best_f: f64,
    /// Mean over candidates with finite fitness.
    pub mean_f: f64,
    pub best_f_e: f64,
    pub best_f_a: f64,
    pub e_eplus_mean: f64,
    pub non_finite: usize,
}

pub fn write_generations_csv<W: Write>(mut out: W, records: &[GenerationRecord]) -> std::io::Result<()> {
    writeln!(out, "generation,seed,best_f,mean_f,best_f_e,best_f_a,e_eplus_mean")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.generation, r.seed, r.best_f, r.mean_f, r.best_f_e, r.best_f_a, r.e_eplus_mean
        )?;
    }
    Ok(())
}

/// Training state for one seed.
pub struct Trainer<E> {
    evaluator: E,
    layout: GenomeLayout,
    mu: f64,
    n_max: usize,
    steps: usize,
    scenarios: usize,
    fixed_scenarios: bool,
    seed: u64,
    cma: CmaState,
    best: Option<(f64, Vec<f64>)>,
}

impl<E: Evaluator> Trainer<E> {
    pub fn new(rollout: &RolloutConfig, train: &TrainConfig, seed: u64, evaluator: E) -> Self {
        let layout = GenomeLayout::from_config(rollout);
        let dim = layout.len();
        let mut cma = CmaState::new(
            vec![0.0; dim],
            train.sigma0,
            train.population,
            parent_count(train.population, train.elite_ratio),
            derive_seed(seed, Stream::CmaSample, 0, 0),
        );
        if let Some(every) = train.eigen_interval {
            cma = cma.with_eigen_interval(every);
        }
        Self {
            evaluator,
            layout,
            mu: rollout.mu,
            n_max: rollout.n_max,
            steps: rollout.steps,
            scenarios: train.scenarios,
            fixed_scenarios: train.fixed_scenarios,
            seed,
            cma,
            best: None,
        }
    }

    pub fn cma(&self) -> &CmaState {
        &self.cma
    }

    pub fn generation(&self) -> u64 {
        self.cma.generation()
    }

    /// Best evaluated genome so far and its fitness.
    pub fn best(&self) -> Option<(f64, &[f64])> {
        self.best.as_ref().map(|(f, g)| (*f, g.as_slice()))
    }

    /// Evaluates a batch with every candidate seeing the same scenarios.
    pub fn evaluate_batch(&self, genomes: &[Vec<f64>], seeds: &[u64]) -> Result<Vec<(Evaluation, Vec<RolloutMetrics>)>> {
        let s = seeds.len();
        let jobs: Vec<(usize, u64)> = (0..genomes.len())
            .flat_map(|k| seeds.iter().map(move |&seed| (k, seed)))
            .collect();
        let runs = jobs
            .par_iter()
            .map(|&(k, seed)| self.evaluator.rollout(&genomes[k], seed))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(runs
            .chunks(s.max(1))
            .map(|c| (Evaluation::average(c, self.mu), c.to_vec()))
            .collect())
    }

    /// One ask, evaluate, tell cycle.
    pub fn step(&mut self) -> Result<GenerationRecord> {
        let genomes = self.cma.ask();
        let seeds = scenario_seeds(self.seed, self.cma.generation(), self.scenarios, self.fixed_scenarios);
        let evals = self.evaluate_batch(&genomes, &seeds)?;
        let f: Vec<f64> = evals.iter().map(|(e, _)| e.f).collect();
        let non_finite = f.iter().filter(|x| !x.is_finite()).count();
        if non_finite > 0 {
            log::warn!(
                "seed {} generation {}: {} candidates with non-finite fitness ranked last",
                self.seed,
                self.cma.generation() + 1,
                non_finite
            );
        }
        let order = rank_descending(&f);
        let top = order[0];
        let top_f = f[top];
        if top_f.is_finite() && self.best.as_ref().is_none_or(|(b, _)| top_f > *b) {
            self.best = Some((top_f, genomes[top].clone()));
        }
        let masses: Vec<f64> = evals
            .iter()
            .flat_map(|(_, runs)| runs.iter().map(|m| m.pos_exchange_mass))
            .collect();
        let finite: Vec<f64> = f.iter().copied().filter(|x| x.is_finite()).collect();
        let mean_f = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };

        self.cma.tell(&genomes, &f)?;
        Ok(GenerationRecord {
            generation: self.cma.generation(),
            seed: self.seed,
            best_f: top_f,
            mean_f,
            best_f_e: evals[top].0.f_e,
            best_f_a: evals[top].0.f_a,
            e_eplus_mean: generation_exchange_metric(&masses, self.n_max, self.steps),
            f_e: evals.iter().map(|(e, _)| e.f_e).collect(),
            f_a: evals.iter().map(|(e, _)| e.f_a).collect(),
            f,
            non_finite,
        })
    }

    pub fn run(&mut self, generations: usize) -> Result<Vec<GenerationRecord>> {
        (0..generations).map(|_| self.step()).collect()
    }

    /// Best-so-far genome (the initial mean before any generation) with
    /// the strategy state.
    pub fn checkpoint(&self, with_cma: bool) -> Checkpoint {
        let (fitness, genes) = match &self.best {
            Some((f, g)) => (Some(*f), g.clone()),
            None => (None, self.cma.mean_slice().to_vec()),
        };
        let mut ckpt = Checkpoint::new(self.layout, Genome(genes)).expect("strategy dimension matches layout");
        ckpt.header.generation = self.cma.generation();
        ckpt.header.fitness = fitness;
        ckpt.header.cma_state = with_cma.then(|| self.cma.snapshot());
        ckpt
    }
}
