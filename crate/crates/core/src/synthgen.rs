//! Synthetic benchmark with a known link law.
//!
//! Each node has `num_noise_features` standard-normal features and one
//! signal feature uniform on `[-1, 1]`. For every source node a fixed-size
//! candidate set of other nodes is drawn without replacement, and each
//! candidate becomes a directed edge with probability `(x_u + x_v + 2) / 4`
//! on the signal values of source and target.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::ale::{AleProfile, BinGrid, Method};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub num_noise_features: usize,
    pub signal_feature_index: usize,
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_nodes: 4096,
            num_noise_features: 5,
            signal_feature_index: 5,
            sparsity: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn num_features(&self) -> usize {
        self.num_noise_features + 1
    }

    /// Candidate targets drawn per source node (rounded half up).
    pub fn candidates_per_node(&self) -> usize {
        (self.sparsity * (self.num_nodes.saturating_sub(1)) as f64 + 0.5).floor() as usize
    }

    /// Expected number of directed edges: the mean edge probability is 1/2.
    pub fn expected_edges(&self) -> f64 {
        self.num_nodes as f64 * self.candidates_per_node() as f64 * 0.5
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 {
            return Err(Error::InvalidArgument("synthetic graph needs at least 2 nodes".into()));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sparsity {} not in (0, 1]",
                self.sparsity
            )));
        }
        if self.signal_feature_index >= self.num_features() {
            return Err(Error::InvalidArgument(format!(
                "signal index {} out of range for {} features",
                self.signal_feature_index,
                self.num_features()
            )));
        }
        if self.candidates_per_node() == 0 {
            return Err(Error::InvalidArgument(format!(
                "sparsity {} selects no candidates among {} nodes",
                self.sparsity, self.num_nodes
            )));
        }
        Ok(())
    }
}

/// Link probability of the generative law.
pub fn edge_probability(x_source: f64, x_target: f64) -> f64 {
    (x_source + x_target + 2.0) / 4.0
}

const FEATURE_STREAM: u64 = 1;
const EDGE_STREAM: u64 = 2;

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_nodes;
    let d = cfg.num_features();
    let s = cfg.signal_feature_index;

    let mut rng = seed::derived_rng(cfg.seed, &[FEATURE_STREAM]);
    let mut features = Array2::zeros((n, d));
    for mut row in features.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = if c == s {
                rng.random_range(-1.0..=1.0)
            } else {
                rng.sample(StandardNormal)
            };
        }
    }

    let c = cfg.candidates_per_node();
    let mut rng = seed::derived_rng(cfg.seed, &[EDGE_STREAM]);
    let mut edges = Vec::with_capacity(cfg.expected_edges() as usize);
    for u in 0..n {
        let xu = features[[u, s]];
        for i in index::sample(&mut rng, n - 1, c) {
            let v = if i >= u { i + 1 } else { i };
            if rng.random::<f64>() < edge_probability(xu, features[[v, s]]) {
                edges.push((u, v));
            }
        }
    }

    let mut noise = 0;
    let names = (0..d)
        .map(|col| {
            if col == s {
                "signal".to_string()
            } else {
                noise += 1;
                format!("noise{}", noise - 1)
            }
        })
        .collect();
    Graph::new(n, &edges, features, names)
}

/// Uncentered ALE of the generative law in the source node's signal
/// feature: the law is linear with slope 1/4, so `g(z) = (z - z_0) / 4`.
pub fn ground_truth_ale(cfg: &SyntheticConfig, grid: &BinGrid) -> Result<AleProfile> {
    if grid.feature != cfg.signal_feature_index {
        return Err(Error::InvalidArgument(format!(
            "ground truth exists only for the signal feature {}",
            cfg.signal_feature_index
        )));
    }
    let (lo, hi) = (grid.edges[0], grid.edges[grid.num_bins()]);
    if lo < -1.0 || hi > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "grid [{lo}, {hi}] leaves the signal support [-1, 1]"
        )));
    }
    let n = grid.num_bins();
    let deltas = grid.edges.windows(2).map(|w| (w[1] - w[0]) / 4.0).collect();
    let mut p = AleProfile::from_local_effects(grid.clone(), deltas, vec![0; n], vec![0; n], Method::GroundTruth);
    p.accumulated = grid.edges.iter().map(|z| (z - lo) / 4.0).collect();
    p.empty_bins.clear();
    p.seed = cfg.seed;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ale::BinStrategy;

    #[test]
    fn probability_endpoints() {
        assert_eq!(edge_probability(1.0, 1.0), 1.0);
        assert_eq!(edge_probability(-1.0, -1.0), 0.0);
    }

    #[test]
    fn candidate_rounding() {
        let cfg = SyntheticConfig::default();
        assert_eq!(cfg.candidates_per_node(), 41);
        let tiny = SyntheticConfig {
            num_nodes: 100,
            sparsity: 0.001,
            ..cfg.clone()
        };
        assert!(generate_synthetic(&tiny).is_err());
        let half = SyntheticConfig {
            num_nodes: 101,
            sparsity: 0.025,
            ..cfg
        };
        assert_eq!(half.candidates_per_node(), 3);
    }

    #[test]
    fn feature_columns() {
        let cfg = SyntheticConfig::default();
        let g = generate_synthetic(&cfg).unwrap();
        let sig = g.features().column(5);
        assert!(sig.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        for c in 0..5 {
            let col = g.features().column(c);
            let mean = col.mean().unwrap();
            let std = col.std(0.0);
            assert!(mean.abs() < 0.1 && (std - 1.0).abs() < 0.1, "col {c}: {mean} {std}");
        }
        assert_eq!(g.feature_names()[5], "signal");
        let rel = (g.num_edges() as f64 - cfg.expected_edges()).abs() / cfg.expected_edges();
        assert!(rel < 0.05, "edge count {} vs {}", g.num_edges(), cfg.expected_edges());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig {
            num_nodes: 300,
            sparsity: 0.05,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SyntheticConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn ground_truth_is_linear() {
        let cfg = SyntheticConfig::default();
        let grid = BinGrid::new(5, vec![-1.0, -0.3, 0.1, 0.65, 1.0], BinStrategy::Quantile).unwrap();
        let p = ground_truth_ale(&cfg, &grid).unwrap();
        assert_eq!(p.accumulated[0], 0.0);
        assert!((p.accumulated[4] - 0.5).abs() < 1e-15);
        for h in 0..4 {
            assert!((p.local_effects[h] - (grid.edges[h + 1] - grid.edges[h]) / 4.0).abs() < 1e-15);
        }
        p.validate().unwrap();

        let wide = BinGrid::new(5, vec![-2.0, 0.0, 1.0], BinStrategy::Quantile).unwrap();
        assert!(ground_truth_ale(&cfg, &wide).is_err());
        let noise = BinGrid::new(0, vec![-1.0, 0.0, 1.0], BinStrategy::Quantile).unwrap();
        assert!(ground_truth_ale(&cfg, &noise).is_err());
    }
}
