//! (mu/mu_w, lambda) CMA-ES with cumulative step-size adaptation and
//! rank-one plus rank-mu covariance updates. Fitness is maximised.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::CmaError;
use crate::rng::{stream_rng, Stream};

/// Learning rates and weights fixed by `(dim, lambda, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaParams {
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl CmaParams {
    pub fn new(dim: usize, mu: usize) -> Self {
        let n = dim as f64;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Parent count for a population and elite ratio, at least one.
pub fn parent_count(lambda: usize, elite_ratio: f64) -> usize {
    ((elite_ratio * lambda as f64).floor() as usize).clamp(1, lambda.max(1))
}

/// Default eigendecomposition refresh interval: `ceil(dim / 10)`.
pub fn default_eigen_interval(dim: usize) -> usize {
    dim.div_ceil(10).max(1)
}

#[derive(Debug, Clone)]
pub struct CmaState {
    dim: usize,
    lambda: usize,
    mu: usize,
    params: CmaParams,
    pub mean: DVector<f64>,
    pub sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: u64,
    seed: u64,
    eigen_interval: usize,
    // Decomposition `C = B diag(D^2) B^T`, refreshed lazily.
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    eigen_generation: u64,
    identity_basis: bool,
}

impl CmaState {
    /// Strategy with `C = I`. `seed` keys the sampling stream.
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: usize, mu: usize, seed: u64) -> Self {
        let dim = mean.len();
        assert!(lambda >= 1 && (1..=lambda).contains(&mu), "need 1 <= mu <= lambda");
        Self {
            dim,
            lambda,
            mu,
            params: CmaParams::new(dim, mu),
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(dim, dim),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            generation: 0,
            seed,
            eigen_interval: default_eigen_interval(dim),
            basis: DMatrix::identity(dim, dim),
            scales: DVector::from_element(dim, 1.0),
            eigen_generation: 0,
            identity_basis: true,
        }
    }

    pub fn with_eigen_interval(mut self, every: usize) -> Self {
        self.eigen_interval = every.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn params(&self) -> &CmaParams {
        &self.params
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean_slice(&self) -> &[f64] {
        self.mean.as_slice()
    }

    fn refresh_eigen(&mut self) {
        if self.generation - self.eigen_generation >= self.eigen_interval as u64 {
            self.decompose();
        }
    }

    fn decompose(&mut self) {
        self.eigen_generation = self.generation;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(self.cov.clone());
        let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let floor = (top * 1e-14).max(f64::MIN_POSITIVE);
        if eig.eigenvalues.iter().any(|&v| v < floor) {
            // Repair: rebuild C from clamped eigenvalues.
            let clamped = eig.eigenvalues.map(|v| v.max(floor));
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            self.scales = clamped.map(f64::sqrt);
        } else {
            self.scales = eig.eigenvalues.map(f64::sqrt);
        }
        self.basis = eig.eigenvectors;
        self.identity_basis = false;
    }

    fn transform(&self, z: &DVector<f64>) -> DVector<f64> {
        let scaled = z.component_mul(&self.scales);
        if self.identity_basis {
            scaled
        } else {
            &self.basis * scaled
        }
    }

    /// `C^(-1/2) y`.
    fn whiten(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.identity_basis {
            y.component_div(&self.scales)
        } else {
            let inner = self.basis.tr_mul(y).component_div(&self.scales);
            &self.basis * inner
        }
    }

    /// Samples `lambda` candidates. Draws are keyed by `(seed, generation, k)`.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        self.refresh_eigen();
        (0..self.lambda)
            .map(|k| {
                let mut rng = stream_rng(self.seed, Stream::CmaSample, self.generation, k as u64);
                let z = DVector::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
                if self.sigma == 0.0 {
                    return self.mean.as_slice().to_vec();
                }
                let x = &self.mean + self.transform(&z) * self.sigma;
                x.as_slice().to_vec()
            })
            .collect()
    }

    /// Updates the distribution from evaluated candidates. Non-finite
    /// fitness values rank below every finite one.
    pub fn tell(&mut self, genomes: &[Vec<f64>], fitnesses: &[f64]) -> Result<(), CmaError> {
        if genomes.len() != fitnesses.len() {
            return Err(CmaError::Mismatch {
                genomes: genomes.len(),
                fitnesses: fitnesses.len(),
            });
        }
        if genomes.len() != self.lambda {
            return Err(CmaError::Population {
                expected: self.lambda,
                actual: genomes.len(),
            });
        }
        if let Some(g) = genomes.iter().find(|g| g.len() != self.dim) {
            return Err(CmaError::Dimension {
                expected: self.dim,
                actual: g.len(),
            });
        }
        let order = rank_descending(fitnesses);
        if self.sigma == 0.0 {
            self.generation += 1;
            return Ok(());
        }
        let p = &self.params;
        let n = self.dim as f64;

        let steps: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&k| (DVector::from_column_slice(&genomes[k]) - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim);
        for (w, y) in p.weights.iter().zip(&steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        let c_s = p.c_sigma;
        let whitened = self.whiten(&y_w);
        self.p_sigma *= 1.0 - c_s;
        self.p_sigma.axpy((c_s * (2.0 - c_s) * p.mu_eff).sqrt(), &whitened, 1.0);
        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - c_s).powf(2.0 * (self.generation + 1) as f64);
        let h_sig = ps_norm / decay.sqrt() / p.chi_n < 1.4 + 2.0 / (n + 1.0);
        let h = if h_sig { 1.0 } else { 0.0 };

        let c_c = p.c_c;
        self.p_c *= 1.0 - c_c;
        self.p_c.axpy(h * (c_c * (2.0 - c_c) * p.mu_eff).sqrt(), &y_w, 1.0);

        let old_weight = 1.0 - p.c_1 - p.c_mu + (1.0 - h) * p.c_1 * c_c * (2.0 - c_c);
        self.cov *= old_weight;
        self.cov.ger(p.c_1, &self.p_c, &self.p_c, 1.0);
        for (w, y) in p.weights.iter().zip(&steps) {
            self.cov.ger(p.c_mu * w, y, y, 1.0);
        }

        self.sigma *= ((c_s / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        self.generation += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> CmaSnapshot {
        let mut cov_upper = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in i..self.dim {
                cov_upper.push(self.cov[(i, j)]);
            }
        }
        CmaSnapshot {
            dim: self.dim,
            lambda: self.lambda,
            mu: self.mu,
            seed: self.seed,
            generation: self.generation,
            eigen_interval: self.eigen_interval,
            sigma: self.sigma,
            mean: self.mean.as_slice().to_vec(),
            p_sigma: self.p_sigma.as_slice().to_vec(),
            p_c: self.p_c.as_slice().to_vec(),
            cov_upper,
        }
    }

    /// Restores a strategy, decomposing the stored covariance afresh.
    pub fn from_snapshot(s: &CmaSnapshot) -> Result<Self, CmaError> {
        let dim = s.dim;
        for len in [s.mean.len(), s.p_sigma.len(), s.p_c.len()] {
            if len != dim {
                return Err(CmaError::Dimension { expected: dim, actual: len });
            }
        }
        if s.cov_upper.len() != dim * (dim + 1) / 2 {
            return Err(CmaError::Dimension {
                expected: dim * (dim + 1) / 2,
                actual: s.cov_upper.len(),
            });
        }
        if s.lambda == 0 || s.mu == 0 || s.mu > s.lambda {
            return Err(CmaError::Population {
                expected: s.lambda,
                actual: s.mu,
            });
        }
        let mut cov = DMatrix::zeros(dim, dim);
        let mut it = s.cov_upper.iter();
        for i in 0..dim {
            for j in i..dim {
                let v = *it.next().expect("length checked");
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let mut state = CmaState::new(s.mean.clone(), s.sigma, s.lambda, s.mu, s.seed).with_eigen_interval(s.eigen_interval);
        state.cov = cov;
        state.p_sigma = DVector::from_vec(s.p_sigma.clone());
        state.p_c = DVector::from_vec(s.p_c.clone());
        state.generation = s.generation;
        if s.generation > 0 {
            state.decompose();
        }
        Ok(state)
    }
}

/// Candidate indices from best to worst; NaN and infinities go last, ties
/// keep index order.
pub fn rank_descending(fitnesses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (fitnesses[a], fitnesses[b]);
        match (fa.is_finite(), fb.is_finite()) {
            (true, true) => fb.total_cmp(&fa),
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (false, false) => std::cmp::Ordering::Equal,
        }
    });
    order
}

/// Serialised strategy. The covariance is stored as its upper triangle,
/// row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaSnapshot {
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    pub seed: u64,
    pub generation: u64,
    pub eigen_interval: usize,
    pub sigma: f64,
    pub mean: Vec<f64>,
    pub p_sigma: Vec<f64>,
    pub p_c: Vec<f64>,
    pub cov_upper: Vec<f64>,
}
