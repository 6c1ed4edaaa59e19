use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BinStrategy {
    #[default]
    Quantile,
    EqualWidth,
}

impl std::str::FromStr for BinStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(BinStrategy::Quantile),
            "equal-width" => Ok(BinStrategy::EqualWidth),
            other => Err(Error::InvalidArgument(format!("unknown bin strategy {other:?}"))),
        }
    }
}

/// Ordered interval edges `z_0 < z_1 < ... < z_N` over one feature.
///
/// Bin `h` (zero-based) covers `(z_h, z_{h+1}]`; the lowest bin also
/// includes its left edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub feature: usize,
    pub edges: Vec<f64>,
    pub strategy: BinStrategy,
}

impl BinGrid {
    pub fn new(feature: usize, edges: Vec<f64>, strategy: BinStrategy) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("a grid needs at least two edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("bin edges".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("bin edges must increase strictly".into()));
        }
        Ok(BinGrid {
            feature,
            edges,
            strategy,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lower(&self, bin: usize) -> f64 {
        self.edges[bin]
    }

    pub fn upper(&self, bin: usize) -> f64 {
        self.edges[bin + 1]
    }

    /// Bin holding `x`, or `None` outside `[z_0, z_N]`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let (first, last) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if !(x >= first && x <= last) {
            return None;
        }
        Some(self.edges[1..].partition_point(|&e| e < x))
    }

    pub fn same_as(&self, other: &BinGrid) -> bool {
        self.feature == other.feature && self.edges == other.edges
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Divides the empirical support of `values` into `num_bins` intervals.
///
/// Quantile grids collapse duplicate edges, so they can end up with fewer
/// bins than requested.
pub fn make_bins(
    feature: usize,
    values: &[f64],
    num_bins: usize,
    strategy: BinStrategy,
) -> Result<BinGrid> {
    if num_bins == 0 {
        return Err(Error::InvalidArgument("number of bins must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = match (sorted.first(), sorted.last()) {
        (Some(&a), Some(&b)) if a < b => (a, b),
        _ => return Err(Error::ConstantFeature),
    };

    let mut edges: Vec<f64> = match strategy {
        BinStrategy::EqualWidth => {
            let width = (max - min) / num_bins as f64;
            (0..=num_bins)
                .map(|i| if i == num_bins { max } else { min + width * i as f64 })
                .collect()
        }
        BinStrategy::Quantile => (0..=num_bins)
            .map(|i| quantile_sorted(&sorted, i as f64 / num_bins as f64))
            .collect(),
    };
    edges.dedup();
    BinGrid::new(feature, edges, strategy)
}
