//! Training-mode forward pass and manual reverse-mode gradients of the
//! mean binary cross-entropy link loss.

use ndarray::{Array1, Array2, Axis};

use super::forward::{aggregate_row, axpy, dot, project, row_of, sigmoid, Projected};
use super::model::{Arch, GnnModel, Layer, LEAKY_SLOPE, NORM_EPS};
use crate::error::{Error, Result};
use crate::graph::{EdgeSet, Graph};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weight: Array2<f64>,
    pub bias: Vec<f64>,
    pub attention: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

/// Gradients with the same layout as the model's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    /// Flattened in the order of [`GnnModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(&l.bias);
            if let Some(a) = &l.attention {
                out.extend(a);
            }
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.extend(g);
                out.extend(b);
            }
        }
        out
    }
}

struct Tape {
    input: Array2<f64>,
    /// `Â · input` for layers that aggregate before projecting.
    aggregated: Option<Array2<f64>>,
    projected: Option<Projected>,
    alpha: Vec<f64>,
    pre: Vec<f64>,
    xhat: Option<Array2<f64>>,
    inv_std: Vec<f64>,
    y: Array2<f64>,
    /// Rows that were computed; `None` means all of them.
    active: Option<Vec<usize>>,
}

/// GCN aggregation commutes with the linear map, so narrow inputs are
/// aggregated first: `(Â H) W` instead of `Â (H W)`.
fn aggregates_first(arch: Arch, layer: &Layer) -> bool {
    arch == Arch::Gcn && layer.in_dim() < layer.out_dim()
}

/// Batch statistics (mean, biased variance) per normalized layer.
pub(crate) type BatchStats = Vec<Option<(Vec<f64>, Vec<f64>)>>;

/// Training forward pass. When `supervised` is given and the last layer has
/// no normalization, only those rows of the last layer are computed; the
/// others are left at zero and must not be read.
fn forward_train(
    model: &GnnModel,
    graph: &Graph,
    supervised: Option<&[usize]>,
) -> (Vec<Tape>, Array2<f64>, BatchStats) {
    let mp = graph.message_passing();
    let adj = mp.adjacency();
    let coef = mp.coefficients();
    let n = graph.num_nodes();
    let nnz = adj.nnz();
    let arch = model.arch();
    let gat = arch == Arch::Gat;
    let mut h = graph.features().clone();
    let mut tapes = Vec::with_capacity(model.num_layers());
    let mut stats = Vec::with_capacity(model.num_layers());
    for (l, layer) in model.layers().iter().enumerate() {
        let last = l + 1 == model.num_layers();
        let active = if last && layer.norm.is_none() {
            supervised.map(<[usize]>::to_vec)
        } else {
            None
        };
        let rows: Vec<usize> = active.clone().unwrap_or_else(|| (0..n).collect());
        let width = layer.out_dim();
        let mut alpha = if gat { vec![0.0; nnz] } else { Vec::new() };
        let mut pre = if gat { vec![0.0; nnz] } else { Vec::new() };
        let mut aggregated = None;
        let mut projected = None;
        let z = if aggregates_first(arch, layer) {
            let din = layer.in_dim();
            let mut ax = Array2::zeros((n, din));
            let axs = ax.as_slice_mut().expect("standard layout");
            for &i in &rows {
                let out = &mut axs[i * din..(i + 1) * din];
                for e in adj.range(i) {
                    axpy(out, coef[e], row_of(&h, adj.indices()[e]));
                }
            }
            let mut z = ax.dot(&layer.weight);
            z += &Array1::from(layer.bias.clone());
            aggregated = Some(ax);
            z
        } else {
            let p = project(layer, h.view());
            let mut z = Array2::zeros((n, width));
            let zs = z.as_slice_mut().expect("standard layout");
            for &i in &rows {
                let range = adj.range(i);
                let (a, pr) = if gat {
                    (Some(&mut alpha[range.clone()]), Some(&mut pre[range]))
                } else {
                    (None, None)
                };
                aggregate_row(arch, layer, mp, i, &p, &mut zs[i * width..(i + 1) * width], a, pr);
            }
            projected = Some(p);
            z
        };

        let (xhat, inv_std, y) = match &layer.norm {
            Some(norm) => {
                let mean = z.mean_axis(Axis(0)).expect("nonempty graph");
                let var = z.var_axis(Axis(0), 0.0);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
                let mut xhat = z;
                for mut row in xhat.rows_mut() {
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = (*v - mean[c]) * inv_std[c];
                    }
                }
                let mut y = xhat.clone();
                for mut row in y.rows_mut() {
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = norm.gamma[c] * *v + norm.beta[c];
                    }
                }
                stats.push(Some((mean.to_vec(), var.to_vec())));
                (Some(xhat), inv_std, y)
            }
            None => {
                stats.push(None);
                (None, Vec::new(), z)
            }
        };
        let out = if last { y.clone() } else { y.mapv(|v| v.max(0.0)) };
        tapes.push(Tape {
            input: std::mem::replace(&mut h, out),
            aggregated,
            projected,
            alpha,
            pre,
            xhat,
            inv_std,
            y,
            active,
        });
    }
    (tapes, h, stats)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over all supervision pairs and its exact
/// gradient with respect to every trainable parameter. Normalization layers
/// run in training mode (statistics of the current node set).
pub fn loss_and_gradients(
    model: &GnnModel,
    graph: &Graph,
    positives: &EdgeSet,
    negatives: &EdgeSet,
) -> Result<(f64, Gradients)> {
    let (loss, grads, _) = loss_gradients_stats(model, graph, positives, negatives)?;
    Ok((loss, grads))
}

/// `out[j] += Σ_i c_ij g[i]` over the given source rows. The aggregation
/// matrix is symmetric, so this is also its transpose product.
fn scatter_rows(graph: &Graph, g: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mp = graph.message_passing();
    let adj = mp.adjacency();
    let coef = mp.coefficients();
    let w = g.ncols();
    let mut out = Array2::zeros(g.raw_dim());
    let os = out.as_slice_mut().expect("standard layout");
    for &i in rows {
        let gi = row_of(g, i);
        for e in adj.range(i) {
            let j = adj.indices()[e];
            axpy(&mut os[j * w..(j + 1) * w], coef[e], gi);
        }
    }
    out
}

pub(crate) fn loss_gradients_stats(
    model: &GnnModel,
    graph: &Graph,
    positives: &EdgeSet,
    negatives: &EdgeSet,
) -> Result<(f64, Gradients, BatchStats)> {
    let total = positives.len() + negatives.len();
    if total == 0 {
        return Err(Error::InvalidArgument("empty supervision sets".into()));
    }
    if graph.num_features() != model.input_dim() {
        return Err(Error::Dimension {
            context: "input features",
            expected: model.input_dim(),
            found: graph.num_features(),
        });
    }
    let n = graph.num_nodes();
    let mut endpoint = vec![false; n];
    for &(u, v) in positives.pairs.iter().chain(&negatives.pairs) {
        graph.check_node(u)?;
        graph.check_node(v)?;
        endpoint[u] = true;
        endpoint[v] = true;
    }
    let supervised: Vec<usize> = (0..n).filter(|&i| endpoint[i]).collect();

    let (tapes, z, stats) = forward_train(model, graph, Some(&supervised));
    let scale = 1.0 / total as f64;
    let mut loss = 0.0;
    let mut grad_h = Array2::<f64>::zeros(z.raw_dim());
    let labelled = positives
        .pairs
        .iter()
        .map(|&p| (p, 1.0))
        .chain(negatives.pairs.iter().map(|&p| (p, 0.0)));
    for ((u, v), y) in labelled {
        let zu = z.row(u);
        let zv = z.row(v);
        let s = zu.dot(&zv);
        loss += softplus(s) - y * s;
        let g = (sigmoid(s) - y) * scale;
        grad_h.row_mut(u).scaled_add(g, &zv);
        grad_h.row_mut(v).scaled_add(g, &zu);
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }

    let mp = graph.message_passing();
    let adj = mp.adjacency();
    let mut layer_grads = Vec::with_capacity(model.num_layers());
    for (l, (layer, tape)) in model.layers().iter().zip(&tapes).enumerate().rev() {
        let last = l + 1 == model.num_layers();
        let width = layer.out_dim();
        let rows: Vec<usize> = tape.active.clone().unwrap_or_else(|| (0..n).collect());

        let mut grad_y = grad_h;
        if !last {
            grad_y.zip_mut_with(&tape.y, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            });
        }

        let (grad_z, gamma, beta) = match (&layer.norm, &tape.xhat) {
            (Some(norm), Some(xhat)) => {
                let mut dgamma = vec![0.0; width];
                let mut dbeta = vec![0.0; width];
                for (gy, xh) in grad_y.rows().into_iter().zip(xhat.rows()) {
                    for c in 0..width {
                        dbeta[c] += gy[c];
                        dgamma[c] += gy[c] * xh[c];
                    }
                }
                let nf = n as f64;
                let mut gz = grad_y;
                for (mut row, xh) in gz.rows_mut().into_iter().zip(xhat.rows()) {
                    for c in 0..width {
                        row[c] = norm.gamma[c]
                            * tape.inv_std[c]
                            * (row[c] - dbeta[c] / nf - xh[c] * dgamma[c] / nf);
                    }
                }
                (gz, Some(dgamma), Some(dbeta))
            }
            _ => (grad_y, None, None),
        };

        let bias = grad_z.sum_axis(Axis(0)).to_vec();
        let mut attention = None;
        let (weight, next) = if let Some(ax) = &tape.aggregated {
            let weight = ax.t().dot(&grad_z);
            let next = (l > 0).then(|| scatter_rows(graph, &grad_z.dot(&layer.weight.t()), &rows));
            (weight, next)
        } else {
            let projected = tape.projected.as_ref().expect("projected layer");
            let grad_p = match model.arch() {
                Arch::Gcn => scatter_rows(graph, &grad_z, &rows),
                Arch::Gat => {
                    let (ac, an) = layer.attention_halves().expect("attention layer");
                    let proj = &projected.proj;
                    let mut grad_pre = vec![0.0; adj.nnz()];
                    let mut grad_center = vec![0.0; n];
                    let mut grad_alpha = Vec::new();
                    for &i in &rows {
                        let gz = row_of(&grad_z, i);
                        let range = adj.range(i);
                        let mut weighted = 0.0;
                        grad_alpha.clear();
                        for e in range.clone() {
                            let ga = dot(gz, row_of(proj, adj.indices()[e]));
                            weighted += tape.alpha[e] * ga;
                            grad_alpha.push(ga);
                        }
                        for (e, &ga) in range.zip(&grad_alpha) {
                            let slope = if tape.pre[e] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                            grad_pre[e] = tape.alpha[e] * (ga - weighted) * slope;
                            grad_center[i] += grad_pre[e];
                        }
                    }
                    let mut grad_p = Array2::<f64>::zeros((n, width));
                    let mut grad_nbr = vec![0.0; n];
                    let gp = grad_p.as_slice_mut().expect("standard layout");
                    for &i in &rows {
                        let gz = row_of(&grad_z, i);
                        for e in adj.range(i) {
                            let j = adj.indices()[e];
                            axpy(&mut gp[j * width..(j + 1) * width], tape.alpha[e], gz);
                            grad_nbr[j] += grad_pre[e];
                        }
                    }
                    let mut grad_ac = vec![0.0; width];
                    let mut grad_an = vec![0.0; width];
                    for (j, row) in gp.chunks_mut(width).enumerate() {
                        let pj = row_of(proj, j);
                        axpy(row, grad_center[j], ac);
                        axpy(row, grad_nbr[j], an);
                        axpy(&mut grad_ac, grad_center[j], pj);
                        axpy(&mut grad_an, grad_nbr[j], pj);
                    }
                    grad_ac.extend(grad_an);
                    attention = Some(grad_ac);
                    grad_p
                }
            };
            let weight = tape.input.t().dot(&grad_p);
            let next = (l > 0).then(|| grad_p.dot(&layer.weight.t()));
            (weight, next)
        };
        grad_h = next.unwrap_or_else(|| Array2::zeros((0, 0)));
        layer_grads.push(LayerGradients {
            weight,
            bias,
            attention,
            gamma,
            beta,
        });
    }
    layer_grads.reverse();
    Ok((loss, Gradients { layers: layer_grads }, stats))
}
