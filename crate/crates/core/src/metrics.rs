//! Reconstruction accuracy and community-structure metrics.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::WeightedNetwork;

/// One row of reconstruction metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub error: Option<f64>,
    pub runtime_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_per_node: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ci: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
}

impl MetricsReport {
    /// TPR, TNR and strength error of `est` against `truth`.
    pub fn compare(truth: &WeightedNetwork, est: &WeightedNetwork, runtime_seconds: f64) -> Result<Self> {
        let (tpr, tnr) = tpr_tnr(truth, est)?;
        Ok(Self {
            tpr,
            tnr,
            error: strength_error(truth, est)?,
            runtime_seconds,
            ..Default::default()
        })
    }
}

/// Community label per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPartition {
    labels: Vec<usize>,
}

impl LabeledPartition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    /// Interns string categories in order of first appearance; returns the
    /// partition and the category names indexed by label.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> (Self, Vec<String>) {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut categories = Vec::new();
        let labels = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                *index.entry(n.to_string()).or_insert_with(|| {
                    categories.push(n.to_string());
                    categories.len() - 1
                })
            })
            .collect();
        (Self { labels }, categories)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        let mut seen: Vec<usize> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

fn same_size(truth: &WeightedNetwork, est: &WeightedNetwork) -> Result<()> {
    if truth.n_nodes() != est.n_nodes() {
        return Err(Error::Parameter(format!(
            "networks differ in size: {} vs {}",
            truth.n_nodes(),
            est.n_nodes()
        )));
    }
    Ok(())
}

/// TPR = Σ a â / Σ a and TNR = Σ (1 − a)(1 − â) / Σ (1 − a) over all
/// ordered pairs, diagonal included. `None` when a class is empty.
pub fn tpr_tnr(truth: &WeightedNetwork, est: &WeightedNetwork) -> Result<(Option<f64>, Option<f64>)> {
    same_size(truth, est)?;
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&a, &ah) in truth.adjacency().iter().zip(est.adjacency().iter()) {
        if a != 0 {
            pos += 1;
            tp += usize::from(ah != 0);
        } else {
            neg += 1;
            tn += usize::from(ah == 0);
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok((rate(tp, pos), rate(tn, neg)))
}

/// ‖Ŵ − W‖_F / ‖W‖_F; `None` when W is all zero.
pub fn strength_error(truth: &WeightedNetwork, est: &WeightedNetwork) -> Result<Option<f64>> {
    same_size(truth, est)?;
    let norm = truth.weights().norm();
    if norm == 0.0 {
        return Ok(None);
    }
    Ok(Some((est.weights() - truth.weights()).norm() / norm))
}

/// Per-node ratio of same-label to different-label link weight counts,
/// Σ_k (â_ik + â_ki)[l_i = l_k] / Σ_k (â_ik + â_ki)[l_i ≠ l_k].
/// Isolated nodes give `None`; nodes with only same-label neighbours give
/// `Some(+∞)`.
pub fn cohesion_index(est: &WeightedNetwork, labels: &LabeledPartition) -> Result<Vec<Option<f64>>> {
    let n = est.n_nodes();
    if labels.len() != n {
        return Err(Error::Parameter(format!("{} labels for {} nodes", labels.len(), n)));
    }
    let a = est.adjacency();
    let l = labels.labels();
    Ok((0..n)
        .map(|i| {
            let (mut same, mut diff) = (0u32, 0u32);
            for k in (0..n).filter(|&k| k != i) {
                let links = u32::from(a[(i, k)]) + u32::from(a[(k, i)]);
                if l[i] == l[k] {
                    same += links;
                } else {
                    diff += links;
                }
            }
            match (same, diff) {
                (0, 0) => None,
                (_, 0) => Some(f64::INFINITY),
                (s, d) => Some(s as f64 / d as f64),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    /// Mean over finite values.
    pub mean: Option<f64>,
    pub n_included: usize,
    /// Nodes that were isolated or had no different-label neighbour.
    pub n_excluded: usize,
}

pub fn mean_cohesion(ci: &[Option<f64>]) -> CiSummary {
    let finite: Vec<f64> = ci.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    CiSummary {
        mean: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        n_included: finite.len(),
        n_excluded: ci.len() - finite.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmiValue {
    pub value: f64,
    /// Both partitions had a single class, so the value is 1 if they are
    /// identical and 0 otherwise.
    pub degenerate: bool,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// 2 I(a; b) / (H(a) + H(b)) from the empirical joint distribution.
pub fn nmi(a: &LabeledPartition, b: &LabeledPartition) -> Result<NmiValue> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!("partitions differ in size: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Parameter("partitions are empty".into()));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ma: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *joint.entry((x, y)).or_default() += 1;
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let ha = entropy(ma.values().copied(), n);
    let hb = entropy(mb.values().copied(), n);
    if ha + hb == 0.0 {
        let value = if ma.len() == 1 && mb.len() == 1 { 1.0 } else { 0.0 };
        return Ok(NmiValue { value, degenerate: true });
    }
    let hab = entropy(joint.values().copied(), n);
    let mutual = (ha + hb - hab).max(0.0);
    Ok(NmiValue { value: (2.0 * mutual / (ha + hb)).clamp(0.0, 1.0), degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmfOptions {
    pub max_iters: usize,
    /// Stop when the objective changes by less than this fraction.
    pub tol: f64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfFactorization {
    pub h: DMatrix<f64>,
    pub partition: LabeledPartition,
    /// ‖S − HHᵀ‖²_F at initialisation and after every update.
    pub objective_trace: Vec<f64>,
    /// S was all zero; every node is put in community 0.
    pub all_zero: bool,
}

/// (|Ŵ| + |Ŵ|ᵀ)/2
pub fn affinity_matrix(est: &WeightedNetwork) -> DMatrix<f64> {
    let a = est.weights().abs();
    (&a + a.transpose()) * 0.5
}

fn sym_objective(s: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (s - h * h.transpose()).norm_squared()
}

/// Symmetric NMF S ≈ HHᵀ with H ≥ 0 (N × k) by the multiplicative update
/// H ← H ⊙ [(SH) ⊘ (HHᵀH)]^{1/4}, from a uniform random start drawn with
/// the given RNG seed. Each node goes to the column of its largest entry,
/// lowest index on ties.
pub fn symmetric_nmf(s: &DMatrix<f64>, k: usize, seed: u64, opts: &NmfOptions) -> Result<NmfFactorization> {
    let n = s.nrows();
    if !s.is_square() || n == 0 {
        return Err(Error::Parameter("affinity matrix must be square and non-empty".into()));
    }
    if k == 0 {
        return Err(Error::Parameter("number of communities must be positive".into()));
    }
    if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Parameter("affinity matrix must be finite and nonnegative".into()));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Ok(NmfFactorization {
            h: DMatrix::zeros(n, k),
            partition: LabeledPartition::new(vec![0; n]),
            objective_trace: vec![0.0],
            all_zero: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (s.mean() / k as f64).sqrt();
    let mut h = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * scale + f64::MIN_POSITIVE);
    let mut trace = vec![sym_objective(s, &h)];
    for _ in 0..opts.max_iters {
        let numer = s * &h;
        let denom = &h * (h.tr_mul(&h));
        for ((hv, &nv), &dv) in h.iter_mut().zip(numer.iter()).zip(denom.iter()) {
            if dv > 0.0 {
                *hv *= (nv / dv).powf(0.25);
            }
        }
        let obj = sym_objective(s, &h);
        let prev = *trace.last().expect("trace is seeded");
        trace.push(obj);
        if (prev - obj).abs() <= opts.tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let labels = (0..n)
        .map(|i| {
            let row = h.row(i);
            (0..k).fold(0, |best, c| if row[c] > row[best] { c } else { best })
        })
        .collect();
    Ok(NmfFactorization { h, partition: LabeledPartition::new(labels), objective_trace: trace, all_zero: false })
}

/// Seed of restart `r` in a run seeded with `seed`.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(restart as u64)
}

/// `restarts` independent symmetric-NMF partitions of the estimate.
pub fn nmf_communities(
    est: &WeightedNetwork,
    k: usize,
    restarts: usize,
    seed: u64,
    opts: &NmfOptions,
) -> Result<Vec<NmfFactorization>> {
    if restarts == 0 {
        return Err(Error::Parameter("restarts must be positive".into()));
    }
    let s = affinity_matrix(est);
    (0..restarts)
        .into_par_iter()
        .map(|r| symmetric_nmf(&s, k, restart_seed(seed, r), opts))
        .collect()
}

/// Average NMI of several partitions against a reference.
pub fn mean_nmi(partitions: &[LabeledPartition], reference: &LabeledPartition) -> Result<f64> {
    if partitions.is_empty() {
        return Err(Error::Parameter("no partitions to average".into()));
    }
    let total: f64 = partitions
        .iter()
        .map(|p| nmi(p, reference).map(|v| v.value))
        .sum::<Result<f64>>()?;
    Ok(total / partitions.len() as f64)
}
