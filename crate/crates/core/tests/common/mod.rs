//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use alegnn::gnn::{Arch, GnnModel, Layer};
use alegnn::{build_graph, Graph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Dense reference implementation written directly from the layer definition.

pub fn dense_adjacency(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n);
    for &(s, t) in edges {
        if s != t {
            a[[s, t]] = 1.0;
            a[[t, s]] = 1.0;
        }
    }
    a
}

pub fn gcn_operator(a: &Array2<f64>) -> Array2<f64> {
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn(a.raw_dim(), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt())
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

pub fn dense_layer(arch: Arch, layer: &Layer, a: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let p = h.dot(&layer.weight);
    let n = a.nrows();
    let agg = match arch {
        Arch::Gcn => gcn_operator(a).dot(&p),
        Arch::Gat => {
            let att = layer.attention.as_ref().unwrap();
            let (ac, an) = att.split_at(layer.out_dim());
            let sc: Vec<f64> = p.rows().into_iter().map(|r| r.iter().zip(ac).map(|(x, y)| x * y).sum()).collect();
            let sn: Vec<f64> = p.rows().into_iter().map(|r| r.iter().zip(an).map(|(x, y)| x * y).sum()).collect();
            let mut w = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                let mut total = 0.0;
                for j in 0..n {
                    if a[[i, j]] != 0.0 {
                        w[[i, j]] = leaky(sc[i] + sn[j]).exp();
                        total += w[[i, j]];
                    }
                }
                w.row_mut(i).mapv_inplace(|v| v / total);
            }
            w.dot(&p)
        }
    };
    let mut z = agg;
    for mut row in z.rows_mut() {
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    z
}

/// `training` selects batch statistics instead of the running ones.
pub fn dense_forward(model: &GnnModel, graph: &Graph, training: bool) -> Array2<f64> {
    let a = dense_adjacency(graph.num_nodes(), graph.edges());
    let mut h = graph.features().clone();
    let depth = model.num_layers();
    for (l, layer) in model.layers().iter().enumerate() {
        let mut z = dense_layer(model.arch(), layer, &a, &h);
        if let Some(norm) = &layer.norm {
            for c in 0..z.ncols() {
                let col = z.column(c).to_owned();
                let (mean, var) = if training {
                    let m = col.mean().unwrap();
                    (m, col.mapv(|v| (v - m) * (v - m)).mean().unwrap())
                } else {
                    (norm.running_mean[c], norm.running_var[c])
                };
                z.column_mut(c).mapv_inplace(|v| {
                    norm.gamma[c] * (v - mean) / (var + 1e-5).sqrt() + norm.beta[c]
                });
            }
        }
        if l + 1 < depth {
            z.mapv_inplace(|v| v.max(0.0));
        }
        h = z;
    }
    h
}

pub fn dense_loss(model: &GnnModel, graph: &Graph, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> f64 {
    let z = dense_forward(model, graph, true);
    let term = |(u, v): (usize, usize), y: f64| {
        let s = z.row(u).dot(&z.row(v));
        let p = 1.0 / (1.0 + (-s).exp());
        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    };
    let total: f64 = pos.iter().map(|&e| term(e, 1.0)).sum::<f64>()
        + neg.iter().map(|&e| term(e, 0.0)).sum::<f64>();
    total / (pos.len() + neg.len()) as f64
}

pub fn random_graph(n: usize, d: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if s != t && rng.random::<f64>() < p {
                edges.push((s, t));
            }
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    build_graph(&edges, x).unwrap()
}

/// Model with every trainable value and the running statistics randomized.
pub fn random_model(arch: Arch, dims: &[usize], norm: bool, seed: u64) -> GnnModel {
    let mut m = GnnModel::new(arch, dims, norm, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let params: Vec<f64> = m
        .flat_params()
        .iter()
        .map(|w| w + rng.random_range(-0.3..0.3))
        .collect();
    m.set_flat_params(&params).unwrap();
    let layers: Vec<Layer> = m
        .layers()
        .iter()
        .cloned()
        .map(|mut l| {
            if let Some(n) = &mut l.norm {
                n.running_mean.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
                n.running_var.iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
            }
            l
        })
        .collect();
    GnnModel::from_layers(arch, layers).unwrap()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// All-pairs hop distances over the symmetrized graph (Floyd-Warshall);
/// `usize::MAX` marks unreachable pairs.
pub fn all_pairs_hops(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(s, t) in g.edges() {
        d[s][t] = 1;
        d[t][s] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    for row in &mut d {
        for v in row.iter_mut() {
            if *v >= inf {
                *v = usize::MAX;
            }
        }
    }
    d
}
