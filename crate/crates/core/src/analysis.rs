//! Role labels, population-level series and the three-way ablation.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, RolloutConfig};
use crate::engine::{GroupController, LogOptions, SlotRecord, Simulation, StepSummary};
use crate::error::{Error, GenomeError};
use crate::genome::{unflatten, GenomeLayout};
use crate::neural::{MutationRule, Substrate};
use crate::rng::{stream_rng, Stream};

/// Dominant resource channel of a boid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Exchange,
    Grazing,
    Suboptimal,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Exchange, Role::Grazing, Role::Suboptimal];

    pub fn index(self) -> usize {
        match self {
            Role::Exchange => 0,
            Role::Grazing => 1,
            Role::Suboptimal => 2,
        }
    }

    /// Single-letter CSV code; `-` marks an inactive slot.
    pub fn code(role: Option<Role>) -> char {
        match role {
            Some(Role::Exchange) => 'E',
            Some(Role::Grazing) => 'G',
            Some(Role::Suboptimal) => 'S',
            None => '-',
        }
    }

    pub fn from_code(c: &str) -> Option<Option<Role>> {
        match c {
            "E" => Some(Some(Role::Exchange)),
            "G" => Some(Some(Role::Grazing)),
            "S" => Some(Some(Role::Suboptimal)),
            "-" => Some(None),
            _ => None,
        }
    }
}

/// A named role needs to strictly beat both other averages.
pub fn classify_role(ebar_e_plus: f64, ebar_g: f64, ebar_c: f64) -> Role {
    if ebar_e_plus > ebar_g && ebar_e_plus > ebar_c {
        Role::Exchange
    } else if ebar_g > ebar_e_plus && ebar_g > ebar_c {
        Role::Grazing
    } else {
        Role::Suboptimal
    }
}

/// Fractions `(exchange, grazing, suboptimal)` among active slots.
/// Inactive slots (`None`) are ignored; an empty step yields zeros.
pub fn role_proportions(roles: &[Option<Role>]) -> [f64; 3] {
    let mut counts = [0u32; 3];
    for r in roles.iter().flatten() {
        counts[r.index()] += 1;
    }
    proportions_from_counts(counts)
}

pub fn proportions_from_counts(counts: [u32; 3]) -> [f64; 3] {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return [0.0; 3];
    }
    let t = f64::from(total);
    [
        f64::from(counts[0]) / t,
        f64::from(counts[1]) / t,
        f64::from(counts[2]) / t,
    ]
}

/// Per-step role proportions from streaming summaries.
pub fn proportion_series(summaries: &[StepSummary]) -> Vec<(u64, [f64; 3])> {
    summaries
        .iter()
        .map(|s| (s.step, proportions_from_counts(s.roles)))
        .collect()
}

/// Mean positive exchange per slot and step, averaged over rollouts:
/// `sum(max(0, e_e)) / (rollouts * n_max * steps)`. Takes the per-rollout
/// positive-exchange totals.
pub fn generation_exchange_metric(pos_exchange_totals: &[f64], n_max: usize, steps: usize) -> f64 {
    let z = (pos_exchange_totals.len() * n_max * steps) as f64;
    if z == 0.0 {
        return 0.0;
    }
    pos_exchange_totals.iter().sum::<f64>() / z
}

/// Same metric computed from raw per-boid exchange values.
pub fn exchange_metric_from_values(values: impl IntoIterator<Item = f64>, z: f64) -> f64 {
    values.into_iter().map(|x| x.max(0.0)).sum::<f64>() / z
}

/// `e_plus(t) = sum_i (e_g - e_c) / n_max`.
pub fn net_resource_series(summaries: &[StepSummary], n_max: usize) -> Vec<f64> {
    summaries.iter().map(|s| s.net_gain / n_max as f64).collect()
}

/// `sum_i max(0, e_e) / n_max` per step.
pub fn positive_exchange_series(summaries: &[StepSummary], n_max: usize) -> Vec<f64> {
    summaries.iter().map(|s| s.pos_exchange / n_max as f64).collect()
}

/// Trailing moving average; the first `bins - 1` points average what is available.
pub fn smooth_trailing(series: &[f64], bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (i, &x) in series.iter().enumerate() {
        acc += x;
        if i >= bins {
            acc -= series[i - bins];
        }
        out.push(acc / (i + 1).min(bins) as f64);
    }
    out
}

/// Frames grouped into per-step role vectors.
pub fn roles_by_step(frames: &[SlotRecord]) -> Vec<(u64, Vec<Option<Role>>)> {
    let mut out: Vec<(u64, Vec<Option<Role>>)> = Vec::new();
    for f in frames {
        match out.last_mut() {
            Some((step, roles)) if *step == f.step => roles.push(f.role),
            _ => out.push((f.step, vec![f.role])),
        }
    }
    out
}

pub fn write_roles_csv<W: Write>(mut out: W, frames: &[SlotRecord]) -> std::io::Result<()> {
    writeln!(out, "step,slot,role")?;
    write_roles_rows(out, frames)
}

pub fn write_roles_rows<W: Write>(mut out: W, frames: &[SlotRecord]) -> std::io::Result<()> {
    for f in frames {
        writeln!(out, "{},{},{}", f.step, f.slot, Role::code(f.role))?;
    }
    Ok(())
}

pub fn write_proportions_csv<W: Write>(mut out: W, rows: &[(u64, [f64; 3])]) -> std::io::Result<()> {
    writeln!(out, "step,frac_exchange,frac_grazing,frac_suboptimal")?;
    write_proportions_rows(out, rows)
}

pub fn write_proportions_rows<W: Write>(mut out: W, rows: &[(u64, [f64; 3])]) -> std::io::Result<()> {
    for (step, p) in rows {
        writeln!(out, "{},{},{},{}", step, p[0], p[1], p[2])?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    step: u64,
    slot: usize,
    active: u8,
    x: f64,
    y: f64,
    theta: f64,
    e: f64,
    e_g: f64,
    e_e: f64,
    e_c: f64,
    m: f64,
    role: String,
}

/// Parses a trajectory CSV back into frames.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<SlotRecord>, Error> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut frames = Vec::new();
    for row in rdr.deserialize::<TrajectoryRow>() {
        let row = row?;
        let role = Role::from_code(&row.role).ok_or_else(|| {
            Error::Csv(csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("unknown role code `{}`", row.role),
            )))
        })?;
        frames.push(SlotRecord {
            step: row.step,
            slot: row.slot,
            active: row.active != 0,
            x: row.x,
            y: row.y,
            theta: row.theta,
            e: row.e,
            e_g: row.e_g,
            e_e: row.e_e,
            e_c: row.e_c,
            m: row.m,
            role,
        });
    }
    Ok(frames)
}

/// Rebuilds per-step summaries from logged frames. Only complete when
/// every step was logged.
pub fn summaries_from_frames(frames: &[SlotRecord]) -> Vec<StepSummary> {
    let mut out: Vec<StepSummary> = Vec::new();
    for f in frames {
        if out.last().is_none_or(|s| s.step != f.step) {
            out.push(StepSummary {
                step: f.step,
                active: 0,
                net_gain: 0.0,
                pos_exchange: 0.0,
                roles: [0; 3],
                births: 0,
                deaths: 0,
            });
        }
        let s = out.last_mut().expect("pushed above");
        if f.active {
            s.active += 1;
            s.net_gain += f.e_g - f.e_c;
            s.pos_exchange += f.e_e.max(0.0);
            if let Some(r) = f.role {
                s.roles[r.index()] += 1;
            }
        }
    }
    out
}

/// Which parts of a trained group survive an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationSetting {
    /// Trained substrate and trained mutation operator.
    Full,
    /// Trained substrate, uniform-noise mutation.
    SubstrateOnly,
    /// Random substrate, uniform-noise mutation.
    RandomAll,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 3] = [
        AblationSetting::Full,
        AblationSetting::SubstrateOnly,
        AblationSetting::RandomAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationSetting::Full => "full",
            AblationSetting::SubstrateOnly => "substrate_only",
            AblationSetting::RandomAll => "random_all",
        }
    }
}

/// Substrate drawn from the optimiser's initial search distribution.
pub fn random_substrate(layout: &GenomeLayout, sigma: f64, seed: u64) -> Substrate {
    let mut rng = stream_rng(seed, Stream::AblationPrior, 0, 0);
    let genes: Vec<f64> = (0..layout.len())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    unflatten(layout, &genes).expect("sized from layout").0
}

/// Group controller for one ablation setting.
pub fn ablation_controller(
    setting: AblationSetting,
    cfg: &RolloutConfig,
    genes: &[f64],
    analysis: &AnalysisConfig,
    seed: u64,
) -> Result<GroupController, GenomeError> {
    let layout = GenomeLayout::from_config(cfg);
    let (sub, net) = unflatten(&layout, genes)?;
    let uniform = MutationRule::Uniform {
        bound: analysis.noise_bound,
    };
    Ok(match setting {
        AblationSetting::Full => GroupController::learned(sub, net, cfg.eta),
        AblationSetting::SubstrateOnly => GroupController {
            substrate: sub,
            mutation: uniform,
        },
        AblationSetting::RandomAll => GroupController {
            substrate: random_substrate(&layout, analysis.prior_sigma, seed),
            mutation: uniform,
        },
    })
}

/// Raw and smoothed per-step series of one ablation rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSeries {
    pub setting: AblationSetting,
    pub seed: u64,
    pub e_plus: Vec<f64>,
    pub e_eplus: Vec<f64>,
    pub e_plus_smoothed: Vec<f64>,
    pub e_eplus_smoothed: Vec<f64>,
}

impl AblationSeries {
    pub fn mean_e_plus(&self) -> f64 {
        mean(&self.e_plus)
    }

    pub fn mean_e_eplus(&self) -> f64 {
        mean(&self.e_eplus)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs every setting for every seed. `base` supplies all parameters except
/// `T` and `n_max`, which come from `analysis`. Output is ordered by setting,
/// then seed.
pub fn run_ablation(
    genes: &[f64],
    base: &RolloutConfig,
    analysis: &AnalysisConfig,
    seeds: &[u64],
) -> Result<Vec<AblationSeries>, GenomeError> {
    let cfg = RolloutConfig {
        steps: analysis.ablation_steps,
        n_max: analysis.ablation_n_max,
        ..base.clone()
    };
    let jobs: Vec<(AblationSetting, u64)> = AblationSetting::ALL
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    jobs.par_iter()
        .map(|&(setting, seed)| {
            let ctl = ablation_controller(setting, &cfg, genes, analysis, seed)?;
            let mut sim = Simulation::new(&cfg, &ctl, seed).with_logging(LogOptions::summaries());
            sim.run(cfg.steps);
            let summaries = &sim.log().summaries;
            let e_plus = net_resource_series(summaries, cfg.n_max);
            let e_eplus = positive_exchange_series(summaries, cfg.n_max);
            Ok(AblationSeries {
                setting,
                seed,
                e_plus_smoothed: smooth_trailing(&e_plus, analysis.smooth_bins),
                e_eplus_smoothed: smooth_trailing(&e_eplus, analysis.smooth_bins),
                e_plus,
                e_eplus,
            })
        })
        .collect()
}

/// Writes `setting,seed,step,e_plus,e_eplus`, raw or smoothed.
pub fn write_ablation_csv<W: Write>(mut out: W, series: &[AblationSeries], smoothed: bool) -> std::io::Result<()> {
    writeln!(out, "setting,seed,step,e_plus,e_eplus")?;
    for s in series {
        let (a, b) = if smoothed {
            (&s.e_plus_smoothed, &s.e_eplus_smoothed)
        } else {
            (&s.e_plus, &s.e_eplus)
        };
        for (t, (x, y)) in a.iter().zip(b).enumerate() {
            writeln!(out, "{},{},{},{},{}", s.setting.name(), s.seed, t, x, y)?;
        }
    }
    Ok(())
}
