use ndarray::{Array2, ArrayView1};

use super::bins::BinGrid;
use super::profile::{AleProfile, Method};
use crate::error::{Error, Result};

/// Classic ALE over a feature table: for each row, the prediction change
/// when its `grid.feature` value moves from the lower to the upper edge of
/// its bin, averaged per bin and accumulated. Rows outside the grid are
/// ignored.
pub fn ale_tabular<F>(predictor: F, table: &Array2<f64>, grid: &BinGrid) -> Result<AleProfile>
where
    F: Fn(ArrayView1<'_, f64>) -> f64,
{
    let s = grid.feature;
    if s >= table.ncols() {
        return Err(Error::Dimension {
            context: "tabular feature index",
            expected: table.ncols(),
            found: s,
        });
    }
    let n = grid.num_bins();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut row = vec![0.0; table.ncols()];
    for r in table.rows() {
        let Some(h) = grid.bin_of(r[s]) else { continue };
        row.iter_mut().zip(r.iter()).for_each(|(d, v)| *d = *v);
        row[s] = grid.upper(h);
        let hi = predictor(ArrayView1::from(&row));
        row[s] = grid.lower(h);
        let lo = predictor(ArrayView1::from(&row));
        sums[h] += hi - lo;
        counts[h] += 1;
    }
    let deltas = sums
        .iter()
        .zip(&counts)
        .map(|(&sum, &c)| if c > 0 { sum / c as f64 } else { 0.0 })
        .collect();
    let predictions = counts.iter().map(|&c| c as u64).collect();
    let mut p = AleProfile::from_local_effects(grid.clone(), deltas, counts, predictions, Method::Tabular);
    p.k = 1;
    p.m = p.bin_counts.iter().sum();
    p.evaluations = 2 * p.m;
    Ok(p)
}
