//! Flat genome encoding of `{substrate, mutation operator}`.
//!
//! Layout, in order:
//!
//! 1. `tau_raw` (`n`)
//! 2. `b` (`n`)
//! 3. `E` row-major (`n * (2r + 10)`)
//! 4. `D` row-major (`2 * n`)
//! 5. for each MLP layer, input side first: weights row-major (`out x in`),
//!    then biases (`out`)

use serde::{Deserialize, Serialize};

use crate::config::RolloutConfig;
use crate::error::GenomeError;
use crate::neural::{MutationNet, Substrate};

/// Dimensions that fix the genome layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeLayout {
    pub n: usize,
    pub r: usize,
    pub l: usize,
    pub h: usize,
}

impl GenomeLayout {
    pub fn from_config(cfg: &RolloutConfig) -> Self {
        Self {
            n: cfg.n,
            r: cfg.r,
            l: cfg.l,
            h: cfg.h,
        }
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.r + 10
    }

    pub fn substrate_len(&self) -> usize {
        Substrate::param_count(self.n, self.obs_dim())
    }

    pub fn mlp_len(&self) -> usize {
        MutationNet::param_count(self.l, self.h)
    }

    pub fn len(&self) -> usize {
        self.substrate_len() + self.mlp_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The unit of group-level selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub Vec<f64>);

impl Genome {
    pub fn zeros(layout: &GenomeLayout) -> Self {
        Genome(vec![0.0; layout.len()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn flatten(sub: &Substrate, net: &MutationNet) -> Genome {
    let mut g = Vec::with_capacity(
        Substrate::param_count(sub.n(), sub.obs_dim())
            + net.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>(),
    );
    g.extend_from_slice(&sub.tau_raw);
    g.extend_from_slice(&sub.bias);
    g.extend_from_slice(&sub.obs_scale);
    g.extend_from_slice(&sub.readout);
    for layer in &net.layers {
        g.extend_from_slice(&layer.weights);
        g.extend_from_slice(&layer.bias);
    }
    Genome(g)
}

pub fn unflatten(layout: &GenomeLayout, genes: &[f64]) -> Result<(Substrate, MutationNet), GenomeError> {
    if genes.len() != layout.len() {
        return Err(GenomeError::Length {
            expected: layout.len(),
            actual: genes.len(),
        });
    }
    let (n, od) = (layout.n, layout.obs_dim());
    let mut rest = genes;
    let mut take = |k: usize| {
        let (head, tail) = rest.split_at(k);
        rest = tail;
        head.to_vec()
    };
    let tau = take(n);
    let bias = take(n);
    let e = take(n * od);
    let d = take(2 * n);
    let sub = Substrate::from_raw(n, od, tau, bias, e, d);
    let mut net = MutationNet::zeros(layout.l, layout.h);
    for layer in &mut net.layers {
        layer.weights = take(layer.weights.len());
        layer.bias = take(layer.bias.len());
    }
    Ok((sub, net))
}
