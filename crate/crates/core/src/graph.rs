//! Graph storage, traversal, link splitting and negative sampling.
//!
//! Supervision edges are directed. Message passing runs over a symmetrized
//! view with self-loops and symmetric normalization coefficients
//! `1 / sqrt(d_u * d_v)`, where `d` counts symmetrized neighbours plus the
//! self-loop.

use std::collections::{HashSet, VecDeque};

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed;

/// Compressed adjacency: `indices[offsets[i]..offsets[i + 1]]` are the
/// neighbours of node `i`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    fn from_sorted_pairs(num_nodes: usize, pairs: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(s, _) in pairs {
            offsets[s + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let indices = pairs.iter().map(|&(_, t)| t).collect();
        Csr { offsets, indices }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Symmetrized adjacency with self-loops used for propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePassing {
    adj: Csr,
    coef: Vec<f64>,
    reverse: Vec<usize>,
}

impl MessagePassing {
    fn build(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut pairs = Vec::with_capacity(2 * edges.len() + num_nodes);
        for &(s, t) in edges {
            pairs.push((s, t));
            pairs.push((t, s));
        }
        pairs.extend((0..num_nodes).map(|i| (i, i)));
        pairs.sort_unstable();
        pairs.dedup();
        let adj = Csr::from_sorted_pairs(num_nodes, &pairs);

        let inv_sqrt: Vec<f64> = (0..num_nodes)
            .map(|i| 1.0 / (adj.degree(i) as f64).sqrt())
            .collect();
        let mut coef = Vec::with_capacity(adj.nnz());
        let mut reverse = Vec::with_capacity(adj.nnz());
        for i in 0..num_nodes {
            for &j in adj.neighbors(i) {
                coef.push(inv_sqrt[i] * inv_sqrt[j]);
                let row = adj.neighbors(j);
                let pos = row.binary_search(&i).expect("adjacency is symmetric");
                reverse.push(adj.offsets[j] + pos);
            }
        }
        MessagePassing { adj, coef, reverse }
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adj
    }

    /// Normalization coefficient per adjacency entry.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// For entry `(i, j)`, the position of entry `(j, i)`.
    pub fn reverse(&self) -> &[usize] {
        &self.reverse
    }

    /// Coefficient for the pair `(u, v)`, or `None` if they are not adjacent.
    pub fn coefficient(&self, u: usize, v: usize) -> Option<f64> {
        let pos = self.adj.neighbors(u).binary_search(&v).ok()?;
        Some(self.coef[self.adj.offsets[u] + pos])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    pub pairs: Vec<(usize, usize)>,
    pub label: EdgeLabel,
}

impl EdgeSet {
    pub fn positive(pairs: Vec<(usize, usize)>) -> Self {
        EdgeSet {
            pairs,
            label: EdgeLabel::Positive,
        }
    }

    pub fn negative(pairs: Vec<(usize, usize)>) -> Self {
        EdgeSet {
            pairs,
            label: EdgeLabel::Negative,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Immutable graph with node features.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    features: Array2<f64>,
    feature_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    out: Csr,
    inc: Csr,
    mp: MessagePassing,
}

/// Builds a graph from directed pairs, dropping self-loops and duplicates.
pub fn build_graph(edge_pairs: &[(usize, usize)], features: Array2<f64>) -> Result<Graph> {
    let num_nodes = features.nrows();
    let names = (0..features.ncols()).map(|c| format!("f{c}")).collect();
    Graph::new(num_nodes, edge_pairs, features, names)
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edge_pairs: &[(usize, usize)],
        features: Array2<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::FeatureRows {
                expected: num_nodes,
                found: features.nrows(),
            });
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Dimension {
                context: "feature names",
                expected: features.ncols(),
                found: feature_names.len(),
            });
        }
        for &(s, t) in edge_pairs {
            for node in [s, t] {
                if node >= num_nodes {
                    return Err(Error::InvalidNode { node, num_nodes });
                }
            }
        }
        let mut edges: Vec<(usize, usize)> =
            edge_pairs.iter().copied().filter(|(s, t)| s != t).collect();
        edges.sort_unstable();
        edges.dedup();

        let out = Csr::from_sorted_pairs(num_nodes, &edges);
        let mut reversed: Vec<(usize, usize)> = edges.iter().map(|&(s, t)| (t, s)).collect();
        reversed.sort_unstable();
        let inc = Csr::from_sorted_pairs(num_nodes, &reversed);
        let mp = MessagePassing::build(num_nodes, &edges);

        Ok(Graph {
            num_nodes,
            features: features.as_standard_layout().into_owned(),
            feature_names,
            edges,
            out,
            inc,
            mp,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Directed edges, sorted by `(source, target)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn csr_out(&self) -> &Csr {
        &self.out
    }

    pub fn csr_in(&self) -> &Csr {
        &self.inc
    }

    pub fn message_passing(&self) -> &MessagePassing {
        &self.mp
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        source < self.num_nodes && self.out.neighbors(source).binary_search(&target).is_ok()
    }

    /// Edge list recovered from the outgoing CSR.
    pub fn edges_from_csr(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|s| self.out.neighbors(s).iter().map(move |&t| (s, t)))
            .collect()
    }

    /// Same topology with a replacement feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Graph> {
        if features.nrows() != self.num_nodes {
            return Err(Error::FeatureRows {
                expected: self.num_nodes,
                found: features.nrows(),
            });
        }
        let names = if features.ncols() == self.feature_names.len() {
            self.feature_names.clone()
        } else {
            (0..features.ncols()).map(|c| format!("f{c}")).collect()
        };
        Ok(Graph {
            features: features.as_standard_layout().into_owned(),
            feature_names: names,
            ..self.clone()
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Graph> {
        if names.len() != self.features.ncols() {
            return Err(Error::Dimension {
                context: "feature names",
                expected: self.features.ncols(),
                found: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node < self.num_nodes {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node,
                num_nodes: self.num_nodes,
            })
        }
    }

    /// Distances (in symmetrized hops) from `source` to every node within
    /// `max_hops`; `u32::MAX` marks nodes further away.
    pub fn bfs_within(&self, source: usize, max_hops: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.num_nodes];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u] as usize;
            if d == max_hops {
                continue;
            }
            for &w in self.mp.adj.neighbors(u) {
                if dist[w] == u32::MAX {
                    dist[w] = (d + 1) as u32;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

/// Shortest symmetrized path length between `v` and `w`, or `None` when it
/// exceeds `max_hops`.
pub fn hop_distance(g: &Graph, v: usize, w: usize, max_hops: usize) -> Result<Option<usize>> {
    g.check_node(v)?;
    g.check_node(w)?;
    if v == w {
        return Ok(Some(0));
    }
    let d = g.bfs_within(v, max_hops)[w];
    Ok((d != u32::MAX).then_some(d as usize))
}

/// Number of unordered pairs in `nodes` that lie within `radius` hops of each
/// other. Duplicate ids in `nodes` are ignored.
pub fn interacting_pairs(g: &Graph, nodes: &[usize], radius: usize) -> Result<usize> {
    if radius == 0 {
        return Err(Error::InvalidArgument("radius must be at least 1".into()));
    }
    for &n in nodes {
        g.check_node(n)?;
    }
    let mut members: Vec<usize> = nodes.to_vec();
    members.sort_unstable();
    members.dedup();
    let mut in_set = vec![false; g.num_nodes()];
    for &n in &members {
        in_set[n] = true;
    }
    let mut count = 0;
    for &v in &members {
        let dist = g.bfs_within(v, radius);
        count += members
            .iter()
            .filter(|&&w| w > v && in_set[w] && dist[w] != u32::MAX)
            .count();
    }
    Ok(count)
}

/// Splits the edge set once into train and held-out positives. The training
/// graph keeps all nodes and features but only the remaining edges.
pub fn random_link_split(g: &Graph, test_fraction: f64, seed: u64) -> Result<(Graph, EdgeSet)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    if g.num_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let num_test = (test_fraction * g.num_edges() as f64).round() as usize;
    let mut order: Vec<usize> = (0..g.num_edges()).collect();
    order.shuffle(&mut seed::rng(seed));
    let (test_idx, train_idx) = order.split_at(num_test);
    let test: Vec<(usize, usize)> = test_idx.iter().map(|&i| g.edges[i]).collect();
    let train: Vec<(usize, usize)> = train_idx.iter().map(|&i| g.edges[i]).collect();
    let train_graph = Graph::new(
        g.num_nodes,
        &train,
        g.features.clone(),
        g.feature_names.clone(),
    )?;
    Ok((train_graph, EdgeSet::positive(test)))
}

/// Draws `count` distinct directed non-edges without self-loops.
pub fn negative_sample(g: &Graph, count: usize, seed: u64) -> Result<EdgeSet> {
    let n = g.num_nodes();
    let available = (n * n.saturating_sub(1)).saturating_sub(g.num_edges());
    if count > available {
        return Err(Error::Infeasible {
            requested: count,
            available,
        });
    }
    let mut rng = seed::rng(seed);
    if count == 0 {
        return Ok(EdgeSet::negative(Vec::new()));
    }

    // Rejection sampling degrades when most candidate pairs are taken.
    if 2 * count > available {
        let non_edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u != v && !g.has_edge(u, v))
            .collect();
        let picked = index::sample(&mut rng, non_edges.len(), count);
        return Ok(EdgeSet::negative(
            picked.into_iter().map(|i| non_edges[i]).collect(),
        ));
    }

    let mut seen = HashSet::with_capacity(count);
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v || g.has_edge(u, v) || !seen.insert((u, v)) {
            continue;
        }
        pairs.push((u, v));
    }
    Ok(EdgeSet::negative(pairs))
}
