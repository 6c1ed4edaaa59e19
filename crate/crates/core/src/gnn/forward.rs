//! Inference-mode forward passes.
//!
//! Every output row is produced by the same row kernel whether the pass
//! covers the whole graph or only the rows reached by a feature override,
//! so a partial re-evaluation reproduces the full pass for those rows.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::model::{Arch, GnnModel, Layer, LEAKY_SLOPE, NORM_EPS};
use crate::error::{Error, Result};
use crate::graph::{Graph, MessagePassing};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (o, p) in y.iter_mut().zip(x) {
        *o += a * p;
    }
}

#[inline]
pub(crate) fn row_of(m: &Array2<f64>, j: usize) -> &[f64] {
    let w = m.ncols();
    &m.as_slice().expect("standard layout")[j * w..(j + 1) * w]
}

#[inline]
pub(crate) fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer input after the linear map, plus per-node attention scores.
#[derive(Debug, Clone)]
pub(crate) struct Projected {
    pub proj: Array2<f64>,
    pub center: Vec<f64>,
    pub neighbor: Vec<f64>,
}

pub(crate) fn project(layer: &Layer, input: ArrayView2<'_, f64>) -> Projected {
    let proj = input.dot(&layer.weight);
    let (center, neighbor) = match layer.attention_halves() {
        Some((ac, an)) => proj
            .rows()
            .into_iter()
            .map(|r| {
                let r = r.as_slice().expect("standard layout");
                (dot(ac, r), dot(an, r))
            })
            .unzip(),
        None => (Vec::new(), Vec::new()),
    };
    Projected {
        proj,
        center,
        neighbor,
    }
}

/// Read access to projected rows, possibly overlaid on a base projection.
pub(crate) trait ProjSource: Sync {
    fn row(&self, j: usize) -> &[f64];
    fn center(&self, j: usize) -> f64;
    fn neighbor(&self, j: usize) -> f64;
}

impl ProjSource for Projected {
    #[inline]
    fn row(&self, j: usize) -> &[f64] {
        row_of(&self.proj, j)
    }
    #[inline]
    fn center(&self, j: usize) -> f64 {
        self.center[j]
    }
    #[inline]
    fn neighbor(&self, j: usize) -> f64 {
        self.neighbor[j]
    }
}

/// Attention-weighted or normalization-weighted neighbourhood sum plus bias.
///
/// For attention layers `alpha` and `pre`, when given, receive the softmax
/// weights and leaky-ReLU inputs for row `i` in adjacency order.
pub(crate) fn aggregate_row<S: ProjSource + ?Sized>(
    arch: Arch,
    layer: &Layer,
    mp: &MessagePassing,
    i: usize,
    src: &S,
    out: &mut [f64],
    alpha: Option<&mut [f64]>,
    pre: Option<&mut [f64]>,
) {
    out.copy_from_slice(&layer.bias);
    let adj = mp.adjacency();
    let range = adj.range(i);
    let nbrs = adj.neighbors(i);
    match arch {
        Arch::Gcn => {
            let coef = &mp.coefficients()[range];
            for (&j, &c) in nbrs.iter().zip(coef) {
                axpy(out, c, src.row(j));
            }
        }
        Arch::Gat => {
            let si = src.center(i);
            let mut local_pre = Vec::new();
            let mut local_alpha = Vec::new();
            let pre = match pre {
                Some(p) => p,
                None => {
                    local_pre.resize(nbrs.len(), 0.0);
                    &mut local_pre[..]
                }
            };
            let alpha = match alpha {
                Some(a) => a,
                None => {
                    local_alpha.resize(nbrs.len(), 0.0);
                    &mut local_alpha[..]
                }
            };
            let mut max = f64::NEG_INFINITY;
            for (e, &j) in nbrs.iter().enumerate() {
                pre[e] = si + src.neighbor(j);
                max = max.max(leaky(pre[e]));
            }
            let mut total = 0.0;
            for e in 0..nbrs.len() {
                alpha[e] = (leaky(pre[e]) - max).exp();
                total += alpha[e];
            }
            for (e, &j) in nbrs.iter().enumerate() {
                alpha[e] /= total;
                axpy(out, alpha[e], src.row(j));
            }
        }
    }
}

/// Frozen-statistics normalization followed by the layer activation.
#[inline]
pub(crate) fn finish_row_inference(layer: &Layer, last: bool, row: &mut [f64]) {
    if let Some(n) = &layer.norm {
        for (c, v) in row.iter_mut().enumerate() {
            let inv = 1.0 / (n.running_var[c] + NORM_EPS).sqrt();
            *v = n.gamma[c] * (*v - n.running_mean[c]) * inv + n.beta[c];
        }
    }
    if !last {
        for v in row.iter_mut() {
            *v = v.max(0.0);
        }
    }
}

fn check_inputs(model: &GnnModel, graph: &Graph, features: ArrayView2<'_, f64>) -> Result<()> {
    if features.ncols() != model.input_dim() {
        return Err(Error::Dimension {
            context: "input features",
            expected: model.input_dim(),
            found: features.ncols(),
        });
    }
    if features.nrows() != graph.num_nodes() {
        return Err(Error::FeatureRows {
            expected: graph.num_nodes(),
            found: features.nrows(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input features".into()));
    }
    Ok(())
}

fn layer_full(
    model: &GnnModel,
    graph: &Graph,
    l: usize,
    projected: &Projected,
) -> Array2<f64> {
    let layer = &model.layers()[l];
    let last = l + 1 == model.num_layers();
    let width = layer.out_dim();
    let mut out = Array2::zeros((graph.num_nodes(), width));
    let mp = graph.message_passing();
    out.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| {
            aggregate_row(model.arch(), layer, mp, i, projected, row, None, None);
            finish_row_inference(layer, last, row);
        });
    out
}

/// Runs all layers; returns the per-layer inputs (features first, final
/// embeddings last) and per-layer projections.
fn forward_cached(
    model: &GnnModel,
    graph: &Graph,
    features: ArrayView2<'_, f64>,
) -> Result<(Vec<Array2<f64>>, Vec<Projected>)> {
    check_inputs(model, graph, features)?;
    let mut inputs = vec![features.as_standard_layout().into_owned()];
    let mut projections = Vec::with_capacity(model.num_layers());
    for l in 0..model.num_layers() {
        let projected = project(&model.layers()[l], inputs[l].view());
        let out = layer_full(model, graph, l, &projected);
        projections.push(projected);
        inputs.push(out);
    }
    let last = inputs.last().unwrap();
    if last.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embeddings".into()));
    }
    Ok((inputs, projections))
}

/// Node embeddings in inference mode for any architecture.
pub fn forward(model: &GnnModel, graph: &Graph) -> Result<Array2<f64>> {
    forward_with_features(model, graph, graph.features().view())
}

/// Forward pass over `graph`'s topology with a replacement feature matrix.
pub fn forward_with_features(
    model: &GnnModel,
    graph: &Graph,
    features: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let (mut inputs, _) = forward_cached(model, graph, features)?;
    Ok(inputs.pop().unwrap())
}

/// `H_{l+1} = act(Â H_l W_l + b_l)` with ReLU between layers.
pub fn gcn_forward(model: &GnnModel, graph: &Graph) -> Result<Array2<f64>> {
    model.check_arch(Arch::Gcn)?;
    forward(model, graph)
}

/// Single-head attention over each node's neighbourhood including itself.
pub fn gat_forward(model: &GnnModel, graph: &Graph) -> Result<Array2<f64>> {
    model.check_arch(Arch::Gat)?;
    forward(model, graph)
}

/// Link probability `sigmoid(z_u . z_v)` for each pair.
pub fn predict_links(embeddings: &Array2<f64>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n = embeddings.nrows();
    pairs
        .iter()
        .map(|&(u, v)| {
            for node in [u, v] {
                if node >= n {
                    return Err(Error::InvalidNode { node, num_nodes: n });
                }
            }
            let zu = embeddings.row(u);
            let zv = embeddings.row(v);
            Ok(sigmoid(zu.dot(&zv)))
        })
        .collect()
}

/// Overlay of replaced projection rows on top of a base projection.
struct Overlay<'a> {
    base: &'a Projected,
    slot: &'a [u32],
    proj: &'a Array2<f64>,
    center: &'a [f64],
    neighbor: &'a [f64],
}

impl ProjSource for Overlay<'_> {
    #[inline]
    fn row(&self, j: usize) -> &[f64] {
        match self.slot[j] {
            u32::MAX => self.base.row(j),
            s => self.proj.row(s as usize).to_slice().expect("standard layout"),
        }
    }
    #[inline]
    fn center(&self, j: usize) -> f64 {
        match self.slot[j] {
            u32::MAX => self.base.center[j],
            s => self.center[s as usize],
        }
    }
    #[inline]
    fn neighbor(&self, j: usize) -> f64 {
        match self.slot[j] {
            u32::MAX => self.base.neighbor[j],
            s => self.neighbor[s as usize],
        }
    }
}

/// Cached inference state of one model on one graph.
///
/// Evaluations with a few overridden feature rows only recompute the rows
/// inside the overrides' receptive field; everything else is read from the
/// cache. The session is immutable and can be shared across threads.
pub struct InferenceSession<'a> {
    model: &'a GnnModel,
    graph: &'a Graph,
    inputs: Vec<Array2<f64>>,
    projections: Vec<Projected>,
    evaluations: AtomicUsize,
}

impl<'a> InferenceSession<'a> {
    pub fn new(model: &'a GnnModel, graph: &'a Graph) -> Result<Self> {
        let (inputs, projections) = forward_cached(model, graph, graph.features().view())?;
        Ok(InferenceSession {
            model,
            graph,
            inputs,
            projections,
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn model(&self) -> &GnnModel {
        self.model
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    /// Embeddings of the unmodified graph.
    pub fn embeddings(&self) -> &Array2<f64> {
        self.inputs.last().unwrap()
    }

    /// Model evaluations performed through this session so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Full forward pass with a replacement feature matrix.
    pub fn forward_with_features(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        forward_with_features(self.model, self.graph, features)
    }

    /// Final embeddings of `needed` after replacing the feature rows of the
    /// given nodes. Rows come back in the order of `needed`.
    pub fn evaluate_overrides(
        &self,
        overrides: &[(usize, &[f64])],
        needed: &[usize],
    ) -> Result<Array2<f64>> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let n = self.graph.num_nodes();
        let d_in = self.model.input_dim();
        let mut changed: Vec<usize> = Vec::with_capacity(overrides.len());
        let mut rows = Array2::zeros((overrides.len(), d_in));
        let mut sorted: Vec<&(usize, &[f64])> = overrides.iter().collect();
        sorted.sort_by_key(|(node, _)| *node);
        for (r, &&(node, values)) in sorted.iter().enumerate() {
            self.graph.check_node(node)?;
            if values.len() != d_in {
                return Err(Error::Dimension {
                    context: "override row",
                    expected: d_in,
                    found: values.len(),
                });
            }
            if changed.last() == Some(&node) {
                return Err(Error::InvalidArgument(format!("node {node} overridden twice")));
            }
            changed.push(node);
            rows.row_mut(r).iter_mut().zip(values).for_each(|(d, v)| *d = *v);
        }
        for &node in needed {
            self.graph.check_node(node)?;
        }

        let adj = self.graph.message_passing().adjacency();
        let mut slot = vec![u32::MAX; n];
        let mut mark = vec![false; n];
        let num_layers = self.model.num_layers();

        for l in 0..num_layers {
            let layer = &self.model.layers()[l];
            let last = l + 1 == num_layers;
            let proj = rows.dot(&layer.weight);
            let (center, neighbor): (Vec<f64>, Vec<f64>) = match layer.attention_halves() {
                Some((ac, an)) => proj
                    .rows()
                    .into_iter()
                    .map(|r| {
                        let r = r.as_slice().expect("standard layout");
                        (dot(ac, r), dot(an, r))
                    })
                    .unzip(),
                None => (Vec::new(), Vec::new()),
            };
            for (s, &node) in changed.iter().enumerate() {
                slot[node] = s as u32;
            }

            // Rows whose aggregation reads a changed projection.
            let mut affected = Vec::new();
            for &node in &changed {
                for &w in adj.neighbors(node) {
                    if !mark[w] {
                        mark[w] = true;
                        affected.push(w);
                    }
                }
            }
            if last {
                // only the requested rows matter after the final layer
                let reached = affected;
                affected = needed
                    .iter()
                    .copied()
                    .filter(|&w| std::mem::replace(&mut mark[w], false))
                    .collect();
                for &w in &reached {
                    mark[w] = false;
                }
            } else {
                for &w in &affected {
                    mark[w] = false;
                }
            }
            affected.sort_unstable();

            let overlay = Overlay {
                base: &self.projections[l],
                slot: &slot,
                proj: &proj,
                center: &center,
                neighbor: &neighbor,
            };
            let width = layer.out_dim();
            let mut next = Array2::zeros((affected.len(), width));
            next.as_slice_mut()
                .expect("standard layout")
                .par_chunks_mut(width)
                .zip(affected.par_iter())
                .for_each(|(row, &i)| {
                    aggregate_row(
                        self.model.arch(),
                        layer,
                        self.graph.message_passing(),
                        i,
                        &overlay,
                        row,
                        None,
                        None,
                    );
                    finish_row_inference(layer, last, row);
                });
            for &node in &changed {
                slot[node] = u32::MAX;
            }
            changed = affected;
            rows = next;
        }

        let base = self.embeddings();
        let mut out = Array2::zeros((needed.len(), self.model.output_dim()));
        for (s, &node) in changed.iter().enumerate() {
            slot[node] = s as u32;
        }
        for (r, &node) in needed.iter().enumerate() {
            let src = match slot[node] {
                u32::MAX => base.row(node),
                s => rows.row(s as usize),
            };
            out.row_mut(r).assign(&src);
        }
        Ok(out)
    }
}
