//! ALE for link prediction.
//!
//! A subset of `m` nodes has its feature moved across bin edges while a
//! disjoint subset of `k` target nodes stays untouched; the local effect of
//! a bin is the mean change of the predicted link probability between the
//! modified nodes in that bin and every target.
//!
//! The exact estimator moves one modified node at a time, so each
//! evaluation sees only that node's change. The approximate estimator moves
//! all of a bin's modified nodes together and evaluates once per edge
//! value, which lets their changes leak into each other's (and the
//! targets') embeddings through message passing.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bins::{make_bins, BinGrid, BinStrategy};
use super::profile::{AleProfile, Method, Normalization};
use crate::error::{Error, Result};
use crate::gnn::{sigmoid, GnnModel, InferenceSession};
use crate::graph::Graph;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AleMode {
    Exact,
    Approximate,
}

impl AleMode {
    pub fn method(self) -> Method {
        match self {
            AleMode::Exact => Method::Exact,
            AleMode::Approximate => Method::Approximate,
        }
    }
}

impl std::str::FromStr for AleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(AleMode::Exact),
            "approximate" => Ok(AleMode::Approximate),
            other => Err(Error::InvalidArgument(format!("unknown ALE mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AleRequest {
    pub feature: usize,
    pub num_bins: usize,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub mode: AleMode,
    pub strategy: BinStrategy,
    pub normalization: Normalization,
}

impl AleRequest {
    pub fn new(feature: usize, m: usize, k: usize, seed: u64, mode: AleMode) -> Self {
        AleRequest {
            feature,
            num_bins: 5,
            m,
            k,
            seed,
            mode,
            strategy: BinStrategy::Quantile,
            normalization: Normalization::PerBin,
        }
    }
}

/// Disjoint node subsets used by one explanation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsets {
    pub modified: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Draws `m` modified nodes and `k` targets uniformly without replacement.
pub fn sample_subsets(num_nodes: usize, m: usize, k: usize, seed: u64) -> Result<Subsets> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidArgument("m and k must be at least 1".into()));
    }
    if m + k > num_nodes {
        return Err(Error::Infeasible {
            requested: m + k,
            available: num_nodes,
        });
    }
    let mut rng = seed::derived_rng(seed, &[0x5ab5e7]);
    let picked = index::sample(&mut rng, num_nodes, m + k).into_vec();
    let (modified, targets) = picked.split_at(m);
    Ok(Subsets {
        modified: modified.to_vec(),
        targets: targets.to_vec(),
    })
}

/// Mean prediction change of one modified node against all targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEffect {
    pub node: usize,
    pub bin: usize,
    pub mean_difference: f64,
}

/// Grid over the full graph's column, shared by every run on that graph.
pub fn feature_grid(graph: &Graph, req: &AleRequest) -> Result<BinGrid> {
    if req.feature >= graph.num_features() {
        return Err(Error::InvalidArgument(format!(
            "feature {} out of range for {} features",
            req.feature,
            graph.num_features()
        )));
    }
    let column = graph.features().column(req.feature).to_vec();
    make_bins(req.feature, &column, req.num_bins, req.strategy)
}

fn mean_pair_difference(lo: &Array2<f64>, hi: &Array2<f64>, v_lo: ArrayView1<'_, f64>, v_hi: ArrayView1<'_, f64>) -> f64 {
    let k = lo.nrows();
    let total: f64 = (0..k)
        .map(|t| sigmoid(v_hi.dot(&hi.row(t))) - sigmoid(v_lo.dot(&lo.row(t))))
        .sum();
    total / k as f64
}

fn moved_row(graph: &Graph, node: usize, feature: usize, value: f64) -> Vec<f64> {
    let mut row = graph.features().row(node).to_vec();
    row[feature] = value;
    row
}

fn exact_effects(
    session: &InferenceSession<'_>,
    grid: &BinGrid,
    members: &[(usize, usize)],
    targets: &[usize],
) -> Result<Vec<NodeEffect>> {
    let graph = session.graph();
    members
        .par_iter()
        .map(|&(node, bin)| {
            let mut needed = Vec::with_capacity(targets.len() + 1);
            needed.push(node);
            needed.extend_from_slice(targets);
            let lo_row = moved_row(graph, node, grid.feature, grid.lower(bin));
            let hi_row = moved_row(graph, node, grid.feature, grid.upper(bin));
            let lo = session.evaluate_overrides(&[(node, &lo_row)], &needed)?;
            let hi = session.evaluate_overrides(&[(node, &hi_row)], &needed)?;
            let lo_t = lo.slice(ndarray::s![1.., ..]).to_owned();
            let hi_t = hi.slice(ndarray::s![1.., ..]).to_owned();
            Ok(NodeEffect {
                node,
                bin,
                mean_difference: mean_pair_difference(&lo_t, &hi_t, lo.row(0), hi.row(0)),
            })
        })
        .collect()
}

fn approximate_effects(
    session: &InferenceSession<'_>,
    grid: &BinGrid,
    members: &[(usize, usize)],
    targets: &[usize],
) -> Result<Vec<NodeEffect>> {
    let graph = session.graph();
    let per_bin: Vec<Vec<usize>> = (0..grid.num_bins())
        .map(|h| members.iter().filter(|m| m.1 == h).map(|m| m.0).collect())
        .collect();
    let results: Vec<Vec<NodeEffect>> = per_bin
        .par_iter()
        .enumerate()
        .filter(|(_, nodes)| !nodes.is_empty())
        .map(|(bin, nodes)| {
            let pass = |value: f64| {
                let mut feats = graph.features().clone();
                for &v in nodes {
                    feats[[v, grid.feature]] = value;
                }
                session.forward_with_features(feats.view())
            };
            let lo = pass(grid.lower(bin))?;
            let hi = pass(grid.upper(bin))?;
            let lo_t = lo.select(Axis(0), targets);
            let hi_t = hi.select(Axis(0), targets);
            // all of the bin's predictions as two (nodes x targets) products
            let lo_s = lo.select(Axis(0), nodes).dot(&lo_t.t());
            let hi_s = hi.select(Axis(0), nodes).dot(&hi_t.t());
            let k = targets.len() as f64;
            Ok(nodes
                .iter()
                .enumerate()
                .map(|(i, &node)| NodeEffect {
                    node,
                    bin,
                    mean_difference: hi_s
                        .row(i)
                        .iter()
                        .zip(lo_s.row(i))
                        .map(|(&h, &l)| sigmoid(h) - sigmoid(l))
                        .sum::<f64>()
                        / k,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Explains with explicitly chosen subsets and grid. Modified nodes whose
/// feature lies outside the grid are skipped.
pub fn explain_subsets(
    session: &InferenceSession<'_>,
    grid: &BinGrid,
    modified: &[usize],
    targets: &[usize],
    mode: AleMode,
    normalization: Normalization,
) -> Result<(AleProfile, Vec<NodeEffect>)> {
    let graph = session.graph();
    if grid.feature >= graph.num_features() {
        return Err(Error::InvalidArgument(format!("feature {} out of range", grid.feature)));
    }
    if modified.is_empty() || targets.is_empty() {
        return Err(Error::InvalidArgument("m and k must be at least 1".into()));
    }
    let mut is_target = vec![false; graph.num_nodes()];
    for &t in targets {
        graph.check_node(t)?;
        is_target[t] = true;
    }
    let mut seen = vec![false; graph.num_nodes()];
    let mut members = Vec::with_capacity(modified.len());
    for &v in modified {
        graph.check_node(v)?;
        if is_target[v] {
            return Err(Error::InvalidArgument(format!("node {v} is both modified and a target")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidArgument(format!("node {v} modified twice")));
        }
        if let Some(bin) = grid.bin_of(graph.features()[[v, grid.feature]]) {
            members.push((v, bin));
        }
    }
    // fixed reduction order regardless of how the caller listed the nodes
    members.sort_unstable_by_key(|&(v, bin)| (bin, v));

    let mut effects = match mode {
        AleMode::Exact => exact_effects(session, grid, &members, targets)?,
        AleMode::Approximate => approximate_effects(session, grid, &members, targets)?,
    };
    effects.sort_unstable_by_key(|e| (e.bin, e.node));

    let n = grid.num_bins();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for e in &effects {
        sums[e.bin] += e.mean_difference;
        counts[e.bin] += 1;
    }
    let denom = |h: usize| match normalization {
        Normalization::PerBin => counts[h],
        Normalization::Global => members.len(),
    };
    let deltas = (0..n)
        .map(|h| if counts[h] > 0 { sums[h] / denom(h) as f64 } else { 0.0 })
        .collect();
    let k = targets.len();
    let predictions = counts.iter().map(|&c| (c * k) as u64).collect();
    let mut p = AleProfile::from_local_effects(grid.clone(), deltas, counts, predictions, mode.method());
    p.k = k;
    p.m = members.len();
    p.normalization = normalization;
    p.evaluations = match mode {
        AleMode::Exact => 2 * members.len(),
        AleMode::Approximate => 2 * p.bin_counts.iter().filter(|&&c| c > 0).count(),
    };
    p.model_fingerprint = Some(session.model().fingerprint());
    Ok((p, effects))
}

/// Full explanation run through an existing session.
pub fn explain(session: &InferenceSession<'_>, req: &AleRequest) -> Result<AleProfile> {
    explain_detailed(session, req).map(|(p, _)| p)
}

pub fn explain_detailed(
    session: &InferenceSession<'_>,
    req: &AleRequest,
) -> Result<(AleProfile, Vec<NodeEffect>)> {
    let graph = session.graph();
    let grid = feature_grid(graph, req)?;
    let subsets = sample_subsets(graph.num_nodes(), req.m, req.k, req.seed)?;
    let (mut p, effects) = explain_subsets(
        session,
        &grid,
        &subsets.modified,
        &subsets.targets,
        req.mode,
        req.normalization,
    )?;
    p.seed = req.seed;
    Ok((p, effects))
}

fn run(model: &GnnModel, graph: &Graph, req: &AleRequest, mode: AleMode) -> Result<AleProfile> {
    if req.mode != mode {
        return Err(Error::InvalidArgument(format!(
            "request mode {:?} does not match estimator {mode:?}",
            req.mode
        )));
    }
    if req.m + req.k > graph.num_nodes() {
        return Err(Error::Infeasible {
            requested: req.m + req.k,
            available: graph.num_nodes(),
        });
    }
    let session = InferenceSession::new(model, graph)?;
    explain(&session, req)
}

/// One-node-at-a-time estimator: `2 m` model evaluations.
pub fn ale_exact(model: &GnnModel, graph: &Graph, req: &AleRequest) -> Result<AleProfile> {
    run(model, graph, req, AleMode::Exact)
}

/// Whole-bin-at-once estimator: two evaluations per occupied bin.
pub fn ale_approximate(model: &GnnModel, graph: &Graph, req: &AleRequest) -> Result<AleProfile> {
    run(model, graph, req, AleMode::Approximate)
}
