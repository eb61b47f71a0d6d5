//! Run configuration. Defaults reproduce the reference parameter table; JSON
//! keys are ASCII transliterations of the symbols (`k_g`, `e_birth`, `T`, ...).

use serde::{Deserialize, Serialize};

use crate::ecology::ExchangeClip;
use crate::error::ConfigError;

/// Every parameter of a single rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub n_max: usize,
    pub n_min: usize,
    pub lambda: f64,
    pub d_b: f64,
    /// Half-width of the square the immortals are scattered in at t = 0.
    pub q_init: f64,
    pub q_max: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub epsilon: f64,
    pub tau_m: f64,
    pub k_g: f64,
    pub k_e: f64,
    pub k_cs: f64,
    pub k_cu: f64,
    pub gamma: f64,
    pub e_max: f64,
    pub e_g_max: f64,
    pub e_e_max: f64,
    pub e_init_min: f64,
    pub e_init_max: f64,
    pub r: usize,
    pub d_max: f64,
    /// Angular width of the ray fan, centred on the heading.
    pub fov: f64,
    /// Immortals draw `J` entries from `U(-j_init, j_init)`.
    pub j_init: f64,
    pub n: usize,
    pub e_birth: f64,
    pub t_birth: u32,
    pub tau_zbar: f64,
    pub tau_ebar: f64,
    pub eta: f64,
    pub l: usize,
    pub h: usize,
    pub e_death: f64,
    pub t_death: u32,
    pub a_min_old: u32,
    pub a_max_old: u32,
    pub mu: f64,
    pub d_spawn: f64,
    pub exchange_clip: ExchangeClip,
    /// Exchange overlaps use positions after this step's motion when true.
    pub exchange_post_move: bool,
    /// Active-boid count from which the per-boid phases fan out over rayon.
    pub parallel_min_boids: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            steps: 4000,
            n_max: 50,
            n_min: 5,
            lambda: 0.3,
            d_b: 20.0,
            q_init: 50.0,
            q_max: 10_000.0,
            v_max: 20.0,
            omega_max: std::f64::consts::PI / 3.0,
            epsilon: 0.1,
            tau_m: 0.04,
            k_g: 0.1,
            k_e: 0.2,
            k_cs: 0.004,
            k_cu: 0.04,
            gamma: 0.001,
            e_max: 100.0,
            e_g_max: 4.0,
            e_e_max: 8.0,
            e_init_min: 20.0,
            e_init_max: 50.0,
            r: 11,
            d_max: 300.0,
            fov: 1.5 * std::f64::consts::PI,
            j_init: 1.0,
            n: 40,
            e_birth: 20.0,
            t_birth: 40,
            tau_zbar: 0.04,
            tau_ebar: 0.04,
            eta: 0.05,
            l: 2,
            h: 16,
            e_death: 2.0,
            t_death: 40,
            a_min_old: 400,
            a_max_old: 600,
            mu: 5.0e-8,
            d_spawn: 20.0,
            exchange_clip: ExchangeClip::Antisymmetric,
            exchange_post_move: true,
            parallel_min_boids: 96,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

fn positive(field: &'static str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {x}")))
    }
}

fn non_negative(field: &'static str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {x}")))
    }
}

impl RolloutConfig {
    /// Length of a controller observation vector.
    pub fn obs_dim(&self) -> usize {
        2 * self.r + 10
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("dt", self.dt)?;
        if self.n_min == 0 {
            return Err(invalid("n_min", "at least one immortal boid is required"));
        }
        if self.n_min > self.n_max {
            return Err(invalid(
                "n_min",
                format!("n_min ({}) exceeds n_max ({})", self.n_min, self.n_max),
            ));
        }
        if self.e_death >= self.e_birth {
            return Err(invalid(
                "e_death",
                format!(
                    "e_death ({}) must be below e_birth ({})",
                    self.e_death, self.e_birth
                ),
            ));
        }
        if self.a_max_old <= self.a_min_old {
            return Err(invalid("a_max_old", "must exceed a_min_old"));
        }
        if self.r == 0 {
            return Err(invalid("r", "at least one ray is required"));
        }
        if self.n == 0 {
            return Err(invalid("n", "at least one hidden unit is required"));
        }
        if self.l == 0 || self.h == 0 {
            return Err(invalid("l", "mutation MLP needs l >= 1 and h >= 1"));
        }
        if self.e_init_min > self.e_init_max {
            return Err(invalid("e_init_min", "must not exceed e_init_max"));
        }
        for (field, x) in [
            ("d_b", self.d_b),
            ("q_max", self.q_max),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("e_max", self.e_max),
            ("d_max", self.d_max),
            ("tau_m", self.tau_m),
            ("tau_zbar", self.tau_zbar),
            ("tau_ebar", self.tau_ebar),
        ] {
            positive(field, x)?;
        }
        for (field, x) in [
            ("lambda", self.lambda),
            ("q_init", self.q_init),
            ("epsilon", self.epsilon),
            ("k_g", self.k_g),
            ("k_e", self.k_e),
            ("k_cs", self.k_cs),
            ("k_cu", self.k_cu),
            ("gamma", self.gamma),
            ("e_g_max", self.e_g_max),
            ("e_e_max", self.e_e_max),
            ("e_init_min", self.e_init_min),
            ("j_init", self.j_init),
            ("fov", self.fov),
            ("eta", self.eta),
            ("mu", self.mu),
            ("d_spawn", self.d_spawn),
            ("e_death", self.e_death),
        ] {
            non_negative(field, x)?;
        }
        if self.fov > std::f64::consts::TAU {
            return Err(invalid("fov", "cannot exceed a full turn"));
        }
        if self.e_init_max > self.e_max {
            return Err(invalid("e_init_max", "must not exceed e_max"));
        }
        Ok(())
    }
}

/// Group-level optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Groups per generation (CMA-ES population size `M`).
    #[serde(rename = "M")]
    pub population: usize,
    /// Scenarios per group (`S`).
    #[serde(rename = "S")]
    pub scenarios: usize,
    pub elite_ratio: f64,
    pub sigma0: f64,
    pub generations: usize,
    /// Reuse the generation-0 scenario seeds every generation.
    pub fixed_scenarios: bool,
    /// Generations between checkpoint writes; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Generations between covariance eigendecompositions; `None` picks `ceil(dim / 10)`.
    pub eigen_interval: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            population: 50,
            scenarios: 2,
            elite_ratio: 0.3,
            sigma0: 0.1,
            generations: 2000,
            fixed_scenarios: false,
            checkpoint_every: 100,
            eigen_interval: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population < 2 {
            return Err(invalid("M", "population must hold at least 2 groups"));
        }
        if self.scenarios == 0 {
            return Err(invalid("S", "at least one scenario is required"));
        }
        if !(self.elite_ratio > 0.0 && self.elite_ratio <= 1.0) {
            return Err(invalid("elite_ratio", "must lie in (0, 1]"));
        }
        if (self.elite_ratio * self.population as f64).floor() < 1.0 {
            return Err(invalid("elite_ratio", "floor(elite_ratio * M) must be >= 1"));
        }
        non_negative("sigma0", self.sigma0)?;
        if self.eigen_interval == Some(0) {
            return Err(invalid("eigen_interval", "must be >= 1"));
        }
        Ok(())
    }
}

/// Settings of the three-way ablation and of the series smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(rename = "T")]
    pub ablation_steps: usize,
    pub ablation_n_max: usize,
    /// Half-width of the uniform replacement mutation.
    pub noise_bound: f64,
    /// Standard deviation of the random-substrate prior.
    pub prior_sigma: f64,
    /// Trailing-window length applied to per-step series.
    pub smooth_bins: usize,
    /// Trailing-window length applied to per-generation curves.
    pub generation_bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            ablation_steps: 10_000,
            ablation_n_max: 100,
            noise_bound: 0.05,
            prior_sigma: 0.1,
            smooth_bins: 500,
            generation_bins: 5,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        non_negative("noise_bound", self.noise_bound)?;
        non_negative("prior_sigma", self.prior_sigma)?;
        if self.smooth_bins == 0 || self.generation_bins == 0 {
            return Err(invalid("smooth_bins", "smoothing windows must be >= 1"));
        }
        Ok(())
    }
}

/// The complete configuration document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rollout: RolloutConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.rollout.validate()?;
        self.train.validate()?;
        self.analysis.validate()?;
        if self.analysis.ablation_n_max < self.rollout.n_min {
            return Err(invalid("ablation_n_max", "must hold the n_min immortal boids"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
