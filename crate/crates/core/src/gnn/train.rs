use rand::seq::SliceRandom;

use super::backward::loss_gradients_stats;
use super::model::{GnnModel, NORM_MOMENTUM};
use crate::error::{Error, Result};
use crate::graph::{negative_sample, EdgeSet, Graph};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Positive pairs per optimizer step; negatives are added on top.
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 1024,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.eps,
            self.negative_ratio,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.batch_size == 0 {
            return Err(Error::InvalidArgument(format!("invalid training config {self:?}")));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument("Adam betas must be below 1".into()));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

const NEGATIVE_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Mini-batch Adam on the graph's edges with freshly drawn negatives each
/// epoch. Returns the trained model and the mean batch loss per epoch.
pub fn train(model: &GnnModel, graph: &Graph, cfg: &TrainConfig) -> Result<(GnnModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = model.clone();
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    if graph.num_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let num_negatives = (cfg.negative_ratio * graph.num_edges() as f64).round() as usize;
    let neg_per_batch = ((cfg.negative_ratio * cfg.batch_size as f64).round() as usize).max(1);

    let mut params = model.flat_params();
    let mut adam = Adam::new(params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        let negatives = negative_sample(
            graph,
            num_negatives,
            seed::derive_seed(cfg.seed, &[NEGATIVE_STREAM, e]),
        )?;
        let mut rng = seed::derived_rng(cfg.seed, &[SHUFFLE_STREAM, e]);
        let mut pos = graph.edges().to_vec();
        pos.shuffle(&mut rng);
        let mut neg = negatives.pairs;
        neg.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in pos.chunks(cfg.batch_size).enumerate() {
            let lo = (b * neg_per_batch).min(neg.len());
            let hi = ((b + 1) * neg_per_batch).min(neg.len());
            let positives = EdgeSet::positive(chunk.to_vec());
            let negatives = EdgeSet::negative(neg[lo..hi].to_vec());
            let (loss, grads, stats) =
                match loss_gradients_stats(&model, graph, &positives, &negatives) {
                    Ok(r) => r,
                    Err(Error::NonFinite(_)) => {
                        return Err(Error::Diverged {
                            epoch,
                            batch: b,
                            loss: f64::NAN,
                        })
                    }
                    Err(e) => return Err(e),
                };
            let flat = grads.flatten();
            if !loss.is_finite() || flat.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam.step(cfg, &mut params, &flat);
            model.set_flat_params(&params)?;
            update_running_stats(&mut model, &stats, graph.num_nodes());
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    if !model.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            batch: 0,
            loss: f64::NAN,
        });
    }
    Ok((model, history))
}

fn update_running_stats(
    model: &mut GnnModel,
    stats: &super::backward::BatchStats,
    num_nodes: usize,
) {
    let unbias = if num_nodes > 1 {
        num_nodes as f64 / (num_nodes - 1) as f64
    } else {
        1.0
    };
    for (layer, s) in model.layers_mut().iter_mut().zip(stats) {
        if let (Some(norm), Some((mean, var))) = (&mut layer.norm, s) {
            for c in 0..mean.len() {
                norm.running_mean[c] =
                    (1.0 - NORM_MOMENTUM) * norm.running_mean[c] + NORM_MOMENTUM * mean[c];
                norm.running_var[c] =
                    (1.0 - NORM_MOMENTUM) * norm.running_var[c] + NORM_MOMENTUM * var[c] * unbias;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::model::Arch;
    use crate::graph::build_graph;
    use ndarray::Array2;

    fn toy() -> Graph {
        let feats = Array2::from_shape_fn((12, 2), |(i, j)| ((i * 2 + j) as f64 * 0.9).sin());
        let edges: Vec<_> = (0..12).map(|i| (i, (i + 1) % 12)).chain([(0, 6), (3, 9)]).collect();
        build_graph(&edges, feats).unwrap()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = GnnModel::new(Arch::Gcn, &[2, 4, 4], false, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (out, hist) = train(&m, &toy(), &cfg).unwrap();
        assert_eq!(out, m);
        assert!(hist.is_empty());
    }

    #[test]
    fn deterministic_and_decreasing() {
        let m = GnnModel::new(Arch::Gat, &[2, 8, 8], true, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 4,
            learning_rate: 1e-2,
            seed: 3,
            ..Default::default()
        };
        let g = toy();
        let (a, ha) = train(&m, &g, &cfg).unwrap();
        let (b, hb) = train(&m, &g, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let head: f64 = ha[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = ha[ha.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn rejects_bad_config() {
        let m = GnnModel::new(Arch::Gcn, &[2, 4], false, 5).unwrap();
        let cfg = TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(train(&m, &toy(), &cfg).is_err());
    }
}
