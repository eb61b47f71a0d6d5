//! CTRNN controller, readout, and the learned mutation operator.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Floor added to decoded rate constants so Euler steps never anti-damp.
pub const TAU_FLOOR: f64 = 1e-3;

/// Number of per-synapse features fed to the mutation operator.
pub const MUTATION_INPUTS: usize = 8;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Rate constant encoded by a raw genome value.
#[inline]
pub fn decode_rate(raw: f64) -> f64 {
    softplus(raw) + TAU_FLOOR
}

/// Inverse of [`decode_rate`] for rates above the floor.
pub fn encode_rate(rate: f64) -> f64 {
    let y = rate - TAU_FLOOR;
    assert!(y > 0.0, "rate {rate} is not above the floor {TAU_FLOOR}");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Group-shared controller parameters `{tau_z, b, E, D}`.
///
/// `tau_raw` is what the genome stores; `tau_z` is its decoded, strictly
/// positive image used by the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Substrate {
    n: usize,
    obs_dim: usize,
    pub tau_raw: Vec<f64>,
    pub tau_z: Vec<f64>,
    pub bias: Vec<f64>,
    /// `n x obs_dim`, row-major.
    pub obs_scale: Vec<f64>,
    /// `2 x n`, row-major; row 0 drives thrust, row 1 torque.
    pub readout: Vec<f64>,
}

impl Substrate {
    pub fn from_raw(
        n: usize,
        obs_dim: usize,
        tau_raw: Vec<f64>,
        bias: Vec<f64>,
        obs_scale: Vec<f64>,
        readout: Vec<f64>,
    ) -> Self {
        assert_eq!(tau_raw.len(), n);
        assert_eq!(bias.len(), n);
        assert_eq!(obs_scale.len(), n * obs_dim);
        assert_eq!(readout.len(), 2 * n);
        let tau_z = tau_raw.iter().map(|&x| decode_rate(x)).collect();
        Self {
            n,
            obs_dim,
            tau_raw,
            tau_z,
            bias,
            obs_scale,
            readout,
        }
    }

    /// Builds a substrate from already-decoded rate constants.
    pub fn with_rates(
        n: usize,
        obs_dim: usize,
        tau_z: Vec<f64>,
        bias: Vec<f64>,
        obs_scale: Vec<f64>,
        readout: Vec<f64>,
    ) -> Self {
        let tau_raw = tau_z.iter().map(|&t| encode_rate(t)).collect();
        let mut s = Self::from_raw(n, obs_dim, tau_raw, bias, obs_scale, readout);
        s.tau_z = tau_z;
        s
    }

    pub fn zeros(n: usize, obs_dim: usize) -> Self {
        Self::from_raw(
            n,
            obs_dim,
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n * obs_dim],
            vec![0.0; 2 * n],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn param_count(n: usize, obs_dim: usize) -> usize {
        n + n + n * obs_dim + 2 * n
    }
}

/// Per-boid controller state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub z: Vec<f64>,
    pub z_bar: Vec<f64>,
    /// `n x n` recurrent matrix, row-major; row = postsynaptic unit.
    pub j: Vec<f64>,
}

impl ControllerState {
    pub fn new(j: Vec<f64>) -> Self {
        let n = (j.len() as f64).sqrt() as usize;
        assert_eq!(n * n, j.len(), "recurrent matrix must be square");
        Self {
            z: vec![0.0; n],
            z_bar: vec![0.0; n],
            j,
        }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }
}

/// Advances the CTRNN by one Euler step in place. `z_bar` tracks the
/// time-t activations with rate `tau_zbar`.
pub fn ctrnn_advance(
    state: &mut ControllerState,
    sub: &Substrate,
    obs: &[f64],
    dt: f64,
    tau_zbar: f64,
    scratch: &mut Vec<f64>,
) {
    let n = sub.n;
    debug_assert_eq!(state.z.len(), n);
    debug_assert_eq!(obs.len(), sub.obs_dim);
    scratch.clear();
    scratch.extend(state.z.iter().zip(&sub.bias).map(|(z, b)| sigmoid(z + b)));
    for x in 0..n {
        let jrow = &state.j[x * n..(x + 1) * n];
        let erow = &sub.obs_scale[x * sub.obs_dim..(x + 1) * sub.obs_dim];
        let rec: f64 = jrow.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
        let inp: f64 = erow.iter().zip(obs).map(|(a, b)| a * b).sum();
        let z = state.z[x];
        state.z[x] = z + dt * sub.tau_z[x] * (rec + inp - z);
        state.z_bar[x] += dt * tau_zbar * (z - state.z_bar[x]);
    }
}

/// Value-returning form of [`ctrnn_advance`].
pub fn ctrnn_step(
    state: &ControllerState,
    sub: &Substrate,
    obs: &[f64],
    dt: f64,
    tau_zbar: f64,
) -> ControllerState {
    let mut next = state.clone();
    ctrnn_advance(&mut next, sub, obs, dt, tau_zbar, &mut Vec::new());
    next
}

/// `[a_s, a_u] = tanh(D z)`.
pub fn readout(z: &[f64], d: &[f64]) -> (f64, f64) {
    let n = z.len();
    debug_assert_eq!(d.len(), 2 * n);
    let a0: f64 = d[..n].iter().zip(z).map(|(a, b)| a * b).sum();
    let a1: f64 = d[n..].iter().zip(z).map(|(a, b)| a * b).sum();
    (a0.tanh(), a1.tanh())
}

/// One dense layer, weights `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>, tanh: bool) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let a = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            out.push(if tanh { a.tanh() } else { a });
        }
    }
}

/// MLP `8 -> h -> ... -> h -> 1` with tanh hidden units and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationNet {
    pub layers: Vec<DenseLayer>,
}

impl MutationNet {
    pub fn zeros(hidden_layers: usize, width: usize) -> Self {
        assert!(hidden_layers >= 1 && width >= 1);
        let mut layers = vec![DenseLayer::zeros(MUTATION_INPUTS, width)];
        for _ in 1..hidden_layers {
            layers.push(DenseLayer::zeros(width, width));
        }
        layers.push(DenseLayer::zeros(width, 1));
        Self { layers }
    }

    pub fn param_count(hidden_layers: usize, width: usize) -> usize {
        (MUTATION_INPUTS * width + width)
            + (hidden_layers - 1) * (width * width + width)
            + (width + 1)
    }

    pub fn forward(&self, input: &[f64; MUTATION_INPUTS]) -> f64 {
        let mut a = input.to_vec();
        let mut b = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&a, &mut b, k < last);
            std::mem::swap(&mut a, &mut b);
        }
        a[0]
    }
}

/// Parent statistics at the moment of birth.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationStats<'a> {
    pub z_bar: &'a [f64],
    pub e_bar: f64,
    pub e_bar_g: f64,
    pub e_bar_e: f64,
    pub e_bar_c: f64,
    pub m: f64,
}

impl MutationStats<'_> {
    /// Feature vector for synapse `(x, y)` carrying weight `j_xy`.
    pub fn features(&self, x: usize, y: usize, j_xy: f64) -> [f64; MUTATION_INPUTS] {
        [
            self.z_bar[x],
            self.z_bar[y],
            j_xy,
            self.e_bar,
            self.e_bar_g,
            self.e_bar_e,
            self.e_bar_c,
            self.m,
        ]
    }
}

/// `J_child[x][y] = J[x][y] + g(o_xy) * (1 + eta * noise[x][y])`.
///
/// The five per-boid features are identical for every synapse, so their
/// first-layer contribution is computed once.
pub fn mutate_j(
    j_parent: &[f64],
    net: &MutationNet,
    stats: &MutationStats<'_>,
    eta: f64,
    noise: &[f64],
) -> Vec<f64> {
    let n = stats.z_bar.len();
    assert_eq!(j_parent.len(), n * n);
    assert_eq!(noise.len(), n * n);
    let first = &net.layers[0];
    let width = first.outputs;
    let shared: Vec<f64> = (0..width)
        .map(|o| {
            let w = &first.weights[o * MUTATION_INPUTS..(o + 1) * MUTATION_INPUTS];
            first.bias[o]
                + w[3] * stats.e_bar
                + w[4] * stats.e_bar_g
                + w[5] * stats.e_bar_e
                + w[6] * stats.e_bar_c
                + w[7] * stats.m
        })
        .collect();
    let last = net.layers.len() - 1;
    let mut a = Vec::with_capacity(width);
    let mut b = Vec::with_capacity(width);
    let mut child = Vec::with_capacity(n * n);
    for x in 0..n {
        for y in 0..n {
            let jxy = j_parent[x * n + y];
            a.clear();
            for (w, s) in first.weights.chunks_exact(MUTATION_INPUTS).zip(&shared) {
                a.push((w[0] * stats.z_bar[x] + w[1] * stats.z_bar[y] + w[2] * jxy + s).tanh());
            }
            for (k, layer) in net.layers.iter().enumerate().skip(1) {
                layer.forward_into(&a, &mut b, k < last);
                std::mem::swap(&mut a, &mut b);
            }
            let g = a[0];
            child.push(jxy + g * (1.0 + eta * noise[x * n + y]));
        }
    }
    child
}

/// How a child's recurrent matrix is derived from its parent's.
#[derive(Debug, Clone, PartialEq)]
pub enum MutationRule {
    /// The group's learned operator with Gaussian multiplicative noise.
    Learned { net: MutationNet, eta: f64 },
    /// Additive `U(-bound, bound)` noise per entry; used in ablations.
    Uniform { bound: f64 },
}

impl MutationRule {
    pub fn apply<R: Rng>(&self, j_parent: &[f64], stats: &MutationStats<'_>, rng: &mut R) -> Vec<f64> {
        match self {
            MutationRule::Learned { net, eta } => {
                let noise: Vec<f64> = (0..j_parent.len()).map(|_| rng.sample(StandardNormal)).collect();
                mutate_j(j_parent, net, stats, *eta, &noise)
            }
            MutationRule::Uniform { bound } => {
                if *bound == 0.0 {
                    return j_parent.to_vec();
                }
                j_parent.iter().map(|&j| j + rng.random_range(-bound..=*bound)).collect()
            }
        }
    }
}
