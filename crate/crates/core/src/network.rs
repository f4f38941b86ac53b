//! Lossy diffusion on a random weighted graph, discretized with forward
//! Euler: `A = I - T (L + F)`, `B = T B_u`. Each edge weight and each input
//! strength carries its own multiplicative noise.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{global_stream, Source};
use crate::system::{cov_from_eigen, EigenNoise, SystemModel};

/// Parameters of the random network system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: usize,
    #[serde(default = "defaults::edge_prob")]
    pub edge_prob: f64,
    /// Inclusive integer range of edge weights.
    #[serde(default = "defaults::weight_range")]
    pub weight_range: (u32, u32),
    /// Diagonal of the loss matrix `F`; a single entry is broadcast.
    #[serde(default = "defaults::loss")]
    pub loss_diagonal: Vec<f64>,
    /// Diagonal of `B_u`; a single entry is broadcast.
    #[serde(default = "defaults::gain")]
    pub input_gain: Vec<f64>,
    /// Euler step. When absent, `1 / λ_max(L + F)` is used.
    #[serde(default)]
    pub step: Option<f64>,
    /// Edge-weight noise variance is drawn uniformly from this range times
    /// the squared weight.
    #[serde(default = "defaults::variance_range")]
    pub edge_variance_range: (f64, f64),
    /// Input-strength noise variance is drawn uniformly from this range
    /// times the squared gain.
    #[serde(default = "defaults::variance_range")]
    pub input_variance_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: usize,
}

mod defaults {
    pub fn edge_prob() -> f64 {
        0.4
    }
    pub fn weight_range() -> (u32, u32) {
        (1, 5)
    }
    pub fn loss() -> Vec<f64> {
        vec![0.05]
    }
    pub fn gain() -> Vec<f64> {
        vec![1.0]
    }
    pub fn variance_range() -> (f64, f64) {
        (0.001, 0.01)
    }
    pub fn max_retries() -> usize {
        1000
    }
}

impl NetworkSpec {
    /// `nodes` nodes with the default weights, loss and noise ranges.
    pub fn with_nodes(nodes: usize, seed: u64) -> Self {
        NetworkSpec {
            nodes,
            edge_prob: defaults::edge_prob(),
            weight_range: defaults::weight_range(),
            loss_diagonal: defaults::loss(),
            input_gain: defaults::gain(),
            step: None,
            edge_variance_range: defaults::variance_range(),
            input_variance_range: defaults::variance_range(),
            seed,
            max_retries: defaults::max_retries(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.nodes < 2 {
            return bad(format!(
                "network needs at least 2 nodes, got {}",
                self.nodes
            ));
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return bad(format!(
                "edge_prob must lie in (0, 1], got {}",
                self.edge_prob
            ));
        }
        let (lo, hi) = self.weight_range;
        if lo == 0 || lo > hi {
            return bad(format!(
                "weight_range must be 1 <= lo <= hi, got ({lo}, {hi})"
            ));
        }
        for (name, v) in [
            ("loss_diagonal", &self.loss_diagonal),
            ("input_gain", &self.input_gain),
        ] {
            if v.len() != 1 && v.len() != self.nodes {
                return bad(format!(
                    "{name} needs 1 or {} entries, got {}",
                    self.nodes,
                    v.len()
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.loss_diagonal.iter().any(|&x| x < 0.0) {
            return bad("loss_diagonal must be nonnegative".into());
        }
        if let Some(t) = self.step {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("step must be positive, got {t}"));
            }
        }
        for (name, (lo, hi)) in [
            ("edge_variance_range", self.edge_variance_range),
            ("input_variance_range", self.input_variance_range),
        ] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!(
                    "{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})"
                ));
            }
        }
        Ok(())
    }

    fn broadcast(v: &[f64], n: usize) -> Vec<f64> {
        if v.len() == 1 {
            vec![v[0]; n]
        } else {
            v.to_vec()
        }
    }
}

/// Undirected weighted edge `(i, j, w)` with `i < j`.
pub type Edge = (usize, usize, u32);

/// Output of [`build_network_system`].
#[derive(Debug, Clone)]
pub struct NetworkSystem {
    pub model: SystemModel,
    pub noise: EigenNoise,
    pub edges: Vec<Edge>,
    pub step: f64,
    /// Draws needed to find an admissible network.
    pub attempts: usize,
}

fn is_connected(n: usize, edges: &[Edge]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Graph Laplacian `D - W` of a weighted edge list.
pub fn laplacian(n: usize, edges: &[Edge]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        let w = f64::from(w);
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

/// Noise direction of edge `(j, k)`: `+1` at `(j, j)` and `(k, k)`, `-1` at
/// `(j, k)` and `(k, j)`.
pub fn edge_direction(n: usize, j: usize, k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    d[(j, j)] = 1.0;
    d[(k, k)] = 1.0;
    d[(j, k)] = -1.0;
    d[(k, j)] = -1.0;
    d
}

/// Noise direction of input `k`: a single `+1` at `(k, k)`.
pub fn input_direction(n: usize, m: usize, k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, m);
    d[(k, k)] = 1.0;
    d
}

/// Draws Erdős–Rényi graphs with random weights and noise variances until
/// the graph is connected and the second-moment dynamics are stable, then
/// builds the discretized diffusion system and its noise directions.
///
/// The variance of edge `(j, k, w)` is `c w²` with `c` drawn from
/// `edge_variance_range`; input `k` gets `c g_k²` likewise. Variances attach
/// to the unit directions of the discrete-time system.
pub fn build_network_system(spec: &NetworkSpec) -> Result<NetworkSystem> {
    spec.validate()?;
    let mut rng = global_stream(spec.seed, Source::Network);
    for attempts in 1..=spec.max_retries {
        if let Some(sys) = draw_network(spec, &mut rng, attempts)? {
            return Ok(sys);
        }
    }
    Err(Error::NoAdmissibleNetwork {
        retries: spec.max_retries,
    })
}

fn draw_network(
    spec: &NetworkSpec,
    rng: &mut rand_chacha::ChaCha8Rng,
    attempts: usize,
) -> Result<Option<NetworkSystem>> {
    let n = spec.nodes;
    let (lo, hi) = spec.weight_range;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(spec.edge_prob) {
                edges.push((i, j, rng.random_range(lo..=hi)));
            }
        }
    }
    if !is_connected(n, &edges) {
        return Ok(None);
    }

    let loss = NetworkSpec::broadcast(&spec.loss_diagonal, n);
    let gain = NetworkSpec::broadcast(&spec.input_gain, n);
    let mut generator = laplacian(n, &edges);
    for (i, f) in loss.iter().enumerate() {
        generator[(i, i)] += f;
    }
    let step = match spec.step {
        Some(t) => t,
        None => {
            let lmax = SymmetricEigen::new(generator.clone())
                .eigenvalues
                .iter()
                .cloned()
                .fold(0.0_f64, f64::max);
            if lmax <= 0.0 {
                return Err(Error::Config(
                    "network generator has no positive eigenvalue".into(),
                ));
            }
            1.0 / lmax
        }
    };
    let a = DMatrix::identity(n, n) - &generator * step;
    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(gain.clone())) * step;

    let mut uniform = |(lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    let mut directions_a = Vec::with_capacity(edges.len());
    let mut variances_a = Vec::with_capacity(edges.len());
    for &(j, k, w) in &edges {
        directions_a.push(edge_direction(n, j, k));
        variances_a.push(uniform(spec.edge_variance_range) * f64::from(w).powi(2));
    }
    let mut directions_b = Vec::with_capacity(n);
    let mut variances_b = Vec::with_capacity(n);
    for (k, g) in gain.iter().enumerate() {
        directions_b.push(input_direction(n, n, k));
        variances_b.push(uniform(spec.input_variance_range) * g * g);
    }
    let noise = EigenNoise::new(n, n, directions_a, variances_a, directions_b, variances_b)?;
    if second_moment_radius(&a, &noise) >= 1.0 {
        return Ok(None);
    }
    let (sigma_a, sigma_b) = cov_from_eigen(&noise);
    let model = SystemModel::new(a, b, sigma_a, sigma_b)?;
    Ok(Some(NetworkSystem {
        model,
        noise,
        edges,
        step,
        attempts,
    }))
}

/// Spectral radius of `A ⊗ A + Σ σ_i² A_i ⊗ A_i`, the map taking
/// `vec(E{x xᵀ})` one step forward without inputs. Symmetric because `A` and
/// the edge directions are.
pub fn second_moment_radius(a: &DMatrix<f64>, noise: &EigenNoise) -> f64 {
    let mut op = a.kronecker(a);
    for (d, v) in noise.directions_a().iter().zip(noise.variances_a()) {
        op += d.kronecker(d) * *v;
    }
    let op = (&op + op.transpose()) * 0.5;
    SymmetricEigen::new(op)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, l| m.max(l.abs()))
}
