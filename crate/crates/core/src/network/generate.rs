use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WeightedNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Barabási–Albert preferential attachment.
    Ba,
    /// Watts–Strogatz ring lattice with random rewiring.
    Ws,
    /// Configuration model on a power-law degree sequence.
    #[value(name = "sf", alias = "power-law-sf")]
    PowerLawSf,
}

/// Parameters for the random topology generators. Every generator produces
/// an undirected simple graph stored symmetrically, with each edge weight
/// drawn uniformly from `weight_range` and mirrored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_nodes: usize,
    /// Edges added per new node (BA).
    pub ba_edges_per_node: usize,
    /// Size of the fully connected seed graph (BA). `None` means
    /// `max(ba_edges_per_node, 2)`.
    pub ba_seed_nodes: Option<usize>,
    /// Mean degree K of the ring lattice (WS); must be even.
    pub ws_mean_degree: usize,
    pub ws_rewire_prob: f64,
    /// Exponent γ of p(k) ∝ k^γ (power-law SF), in [−3, −2].
    pub sf_gamma: f64,
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Ba,
            n_nodes: 50,
            ba_edges_per_node: 2,
            ba_seed_nodes: None,
            ws_mean_degree: 4,
            ws_rewire_prob: 0.1,
            sf_gamma: -2.5,
            weight_range: (2.0, 3.0),
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn ba(n_nodes: usize, edges_per_node: usize, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Ba,
            n_nodes,
            ba_edges_per_node: edges_per_node,
            seed,
            ..Self::default()
        }
    }

    pub fn ws(n_nodes: usize, mean_degree: usize, rewire_prob: f64, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Ws,
            n_nodes,
            ws_mean_degree: mean_degree,
            ws_rewire_prob: rewire_prob,
            seed,
            ..Self::default()
        }
    }

    pub fn powerlaw(n_nodes: usize, gamma: f64, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::PowerLawSf,
            n_nodes,
            sf_gamma: gamma,
            seed,
            ..Self::default()
        }
    }

    pub fn with_weights(mut self, lo: f64, hi: f64) -> Self {
        self.weight_range = (lo, hi);
        self
    }

    fn validate_weights(&self) -> Result<()> {
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Parameter(format!(
                "weight range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &GeneratorSpec) -> Result<WeightedNetwork> {
    match spec.kind {
        GeneratorKind::Ba => generate_ba(spec),
        GeneratorKind::Ws => generate_ws(spec),
        GeneratorKind::PowerLawSf => generate_powerlaw_sf(spec),
    }
}

pub fn generate_ba(spec: &GeneratorSpec) -> Result<WeightedNetwork> {
    spec.validate_weights()?;
    let n = spec.n_nodes;
    let m = spec.ba_edges_per_node;
    if m < 1 || n <= m {
        return Err(Error::Parameter(format!(
            "BA needs n_nodes > edges_per_node >= 1, got n = {n}, m = {m}"
        )));
    }
    let m0 = spec.ba_seed_nodes.unwrap_or(m.max(2)).min(n);
    if m0 < m || m0 < 2 {
        return Err(Error::Parameter(format!(
            "BA seed graph of {m0} nodes cannot support {m} edges per new node"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edges = BTreeSet::new();
    // Every edge endpoint appears once here, so uniform draws are
    // degree-proportional.
    let mut endpoints = Vec::with_capacity(2 * m * n);
    for i in 0..m0 {
        for j in (i + 1)..m0 {
            edges.insert((i, j));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    for new in m0..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(endpoints[rng.random_range(0..endpoints.len())]);
        }
        for t in targets {
            edges.insert((t, new));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    Ok(weighted_undirected(n, &edges, spec.weight_range, &mut rng))
}

pub fn generate_ws(spec: &GeneratorSpec) -> Result<WeightedNetwork> {
    spec.validate_weights()?;
    let n = spec.n_nodes;
    let k = spec.ws_mean_degree;
    let p = spec.ws_rewire_prob;
    if k == 0 || k % 2 != 0 {
        return Err(Error::Parameter(format!("WS mean degree must be a positive even integer, got {k}")));
    }
    if k >= n {
        return Err(Error::Parameter(format!("WS mean degree {k} must be below n_nodes = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("WS rewiring probability must lie in [0, 1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut neighbours = vec![BTreeSet::new(); n];
    for i in 0..n {
        for step in 1..=k / 2 {
            let j = (i + step) % n;
            neighbours[i].insert(j);
            neighbours[j].insert(i);
        }
    }
    // Rewire the far end of each lattice edge (i, i+step) with probability p.
    for step in 1..=k / 2 {
        for i in 0..n {
            let j = (i + step) % n;
            if !neighbours[i].contains(&j) || rng.random::<f64>() >= p {
                continue;
            }
            if neighbours[i].len() >= n - 1 {
                continue;
            }
            let target = loop {
                let t = rng.random_range(0..n);
                if t != i && !neighbours[i].contains(&t) {
                    break t;
                }
            };
            neighbours[i].remove(&j);
            neighbours[j].remove(&i);
            neighbours[i].insert(target);
            neighbours[target].insert(i);
        }
    }
    let edges: BTreeSet<(usize, usize)> = neighbours
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .collect();
    Ok(weighted_undirected(n, &edges, spec.weight_range, &mut rng))
}

pub fn generate_powerlaw_sf(spec: &GeneratorSpec) -> Result<WeightedNetwork> {
    spec.validate_weights()?;
    let n = spec.n_nodes;
    let gamma = spec.sf_gamma;
    if !(-3.0..=-2.0).contains(&gamma) {
        return Err(Error::Parameter(format!("power-law exponent must lie in [-3, -2], got {gamma}")));
    }
    if n < 20 {
        return Err(Error::Parameter(format!("power-law generator needs n_nodes >= 20, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Inverse-CDF sampling on the truncated support {1, ..., n-1}.
    let mut cdf: Vec<f64> = (1..n).map(|k| (k as f64).powf(gamma)).collect();
    let mut acc = 0.0;
    for c in cdf.iter_mut() {
        acc += *c;
        *c = acc;
    }
    let mut degrees: Vec<usize> = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c < u).min(n - 2) + 1
        })
        .collect();
    if degrees.iter().sum::<usize>() % 2 == 1 {
        let candidates: Vec<usize> = (0..n).filter(|&i| degrees[i] < n - 1).collect();
        let pick = candidates[rng.random_range(0..candidates.len())];
        degrees[pick] += 1;
    }

    let mut stubs: Vec<usize> = degrees
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i, d))
        .collect();
    stubs.shuffle(&mut rng);
    // Self-loops and repeated pairs are dropped.
    let edges: BTreeSet<(usize, usize)> = stubs
        .chunks_exact(2)
        .filter(|pair| pair[0] != pair[1])
        .map(|pair| (pair[0].min(pair[1]), pair[0].max(pair[1])))
        .collect();
    Ok(weighted_undirected(n, &edges, spec.weight_range, &mut rng))
}

/// Replaces the weights of an undirected topology with iid U(lo, hi)
/// draws, one per edge, visited in sorted order.
pub fn reweight_uniform(net: &WeightedNetwork, range: (f64, f64), seed: u64) -> Result<WeightedNetwork> {
    if !(range.0 > 0.0 && range.1 >= range.0 && range.1.is_finite()) {
        return Err(Error::Parameter(format!("weight range must satisfy 0 < lo <= hi, got {range:?}")));
    }
    if !net.is_symmetric() {
        return Err(Error::Parameter("reweighting needs an undirected topology".into()));
    }
    let edges: BTreeSet<(usize, usize)> = net.edges().into_iter().filter(|e| e.0 < e.1).map(|(i, j, _)| (i, j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(weighted_undirected(net.n_nodes(), &edges, range, &mut rng))
}

/// Assigns one uniform weight per undirected edge, visiting edges in
/// sorted order so the draw sequence is reproducible.
fn weighted_undirected(
    n: usize,
    edges: &BTreeSet<(usize, usize)>,
    (lo, hi): (f64, f64),
    rng: &mut ChaCha8Rng,
) -> WeightedNetwork {
    let mut weights = DMatrix::zeros(n, n);
    for &(i, j) in edges {
        let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
        weights[(i, j)] = w;
        weights[(j, i)] = w;
    }
    WeightedNetwork::from_weights(weights).expect("generated weights are finite")
}
