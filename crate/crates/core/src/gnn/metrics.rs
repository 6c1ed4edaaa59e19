use ndarray::Array2;

use super::forward::{forward, sigmoid};
use super::model::GnnModel;
use crate::error::{Error, Result};
use crate::graph::{EdgeSet, Graph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub auc_roc: f64,
    pub f1: f64,
    /// Mean binary cross-entropy.
    pub loss: f64,
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, with
/// average ranks for tied scores.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            context: "auc labels",
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// F1 score with scores at or above `threshold` predicted positive.
pub fn f1_score(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fne) as f64
}

fn logits(z: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(u, v)| z.row(u).dot(&z.row(v))).collect()
}

/// Held-out link prediction quality in inference mode.
pub fn evaluate(
    model: &GnnModel,
    graph: &Graph,
    positives: &EdgeSet,
    negatives: &EdgeSet,
) -> Result<Metrics> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::UndefinedAuc);
    }
    for &(u, v) in positives.pairs.iter().chain(&negatives.pairs) {
        graph.check_node(u)?;
        graph.check_node(v)?;
    }
    let z = forward(model, graph)?;
    let mut s = logits(&z, &positives.pairs);
    s.extend(logits(&z, &negatives.pairs));
    let labels: Vec<bool> = (0..s.len()).map(|i| i < positives.len()).collect();
    let loss = s
        .iter()
        .zip(&labels)
        .map(|(&x, &l)| {
            let y = if l { 1.0 } else { 0.0 };
            x.max(0.0) + (-x.abs()).exp().ln_1p() - y * x
        })
        .sum::<f64>()
        / s.len() as f64;
    let probs: Vec<f64> = s.iter().map(|&x| sigmoid(x)).collect();
    Ok(Metrics {
        auc_roc: auc_roc(&probs, &labels)?,
        f1: f1_score(&probs, &labels, 0.5),
        loss,
    })
}
