//! Curve comparison: RMSE, a per-point χ² test and a permutation test.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ale::{AleProfile, BinGrid};
use crate::error::{Error, Result};
use crate::seed;

/// Root mean squared difference over the accumulated curve points.
pub fn rmse(a: &AleProfile, b: &AleProfile) -> Result<f64> {
    if !a.grid.same_as(&b.grid) || a.accumulated.len() != b.accumulated.len() {
        return Err(Error::GridMismatch);
    }
    Ok(rmse_values(&a.accumulated, &b.accumulated))
}

fn rmse_values(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "spearman needs two equal-length samples of at least 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some(sxy / (sxx * syy).sqrt()))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// modified Lentz
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma_q({a}, {x}) undefined")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let q = if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Upper tail probability of the χ² distribution.
pub fn chi2_sf(x: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidArgument("χ² needs at least one degree of freedom".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("χ² statistic {x} must be nonnegative")));
    }
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Profiles forming one side of a comparison.
#[derive(Debug, Clone)]
pub struct CurveGroup {
    pub label: String,
    pub profiles: Vec<AleProfile>,
}

impl CurveGroup {
    pub fn new(label: impl Into<String>, profiles: Vec<AleProfile>) -> Result<Self> {
        let first = profiles
            .first()
            .ok_or_else(|| Error::InvalidArgument("curve group is empty".into()))?;
        if profiles.iter().any(|p| !p.grid.same_as(&first.grid)) {
            return Err(Error::GridMismatch);
        }
        Ok(CurveGroup {
            label: label.into(),
            profiles,
        })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn grid(&self) -> &BinGrid {
        &self.profiles[0].grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Rmse,
    Chi2,
    Permutation,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::Rmse => "rmse",
            TestMethod::Chi2 => "chi2",
            TestMethod::Permutation => "permutation",
        }
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmse" => Ok(TestMethod::Rmse),
            "chi2" => Ok(TestMethod::Chi2),
            "permutation" => Ok(TestMethod::Permutation),
            other => Err(Error::InvalidArgument(format!("unknown test {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    pub seed: Option<u64>,
    pub size_a: usize,
    pub size_b: usize,
}

impl fmt::Display for TestResult {
    /// One-line `key=value` record.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        write!(
            f,
            "method={} statistic={} dof={} p={} seed={} n_a={} n_b={}",
            self.method.as_str(),
            self.statistic,
            opt(self.dof.map(|d| d.to_string())),
            opt(self.p_value.map(|p| p.to_string())),
            opt(self.seed.map(|s| s.to_string())),
            self.size_a,
            self.size_b
        )
    }
}

/// Prediction-weighted mean curve of a set of profiles on one grid. Bins
/// without predictions in any profile fall back to the plain mean of the
/// local effects; the starting value is the plain mean of the starting
/// values, so offset (centered) curves keep their offset.
pub fn group_average(profiles: &[&AleProfile]) -> Vec<f64> {
    let n = profiles[0].grid.num_bins();
    let start = profiles.iter().map(|p| p.accumulated[0]).sum::<f64>() / profiles.len() as f64;
    let mut out = Vec::with_capacity(n + 1);
    out.push(start);
    let mut acc = start;
    for h in 0..n {
        let total: u64 = profiles.iter().map(|p| p.prediction_counts[h]).sum();
        let delta = if total > 0 {
            profiles
                .iter()
                .map(|p| p.prediction_counts[h] as f64 * p.local_effects[h])
                .sum::<f64>()
                / total as f64
        } else {
            profiles.iter().map(|p| p.local_effects[h]).sum::<f64>() / profiles.len() as f64
        };
        acc += delta;
        out.push(acc);
    }
    out
}

fn check_pair(a: &CurveGroup, b: &CurveGroup) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("curve group is empty".into()));
    }
    if !a.grid().same_as(b.grid()) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// RMSE between the two groups' weighted average curves.
pub fn rmse_test(a: &CurveGroup, b: &CurveGroup) -> Result<TestResult> {
    check_pair(a, b)?;
    let ra: Vec<_> = a.profiles.iter().collect();
    let rb: Vec<_> = b.profiles.iter().collect();
    Ok(TestResult {
        method: TestMethod::Rmse,
        statistic: rmse_values(&group_average(&ra), &group_average(&rb)),
        dof: None,
        p_value: None,
        seed: None,
        size_a: a.len(),
        size_b: b.len(),
    })
}

fn mean_and_se2(group: &CurveGroup, point: usize) -> (f64, f64) {
    let n = group.len() as f64;
    let vals = group.profiles.iter().map(|p| p.accumulated[point]);
    let mean = vals.clone().sum::<f64>() / n;
    let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var / n)
}

/// Per-point squared mean difference over the summed squared standard
/// errors of the two group means, with one degree of freedom per point.
pub fn chi2_curve_test(a: &CurveGroup, b: &CurveGroup) -> Result<TestResult> {
    check_pair(a, b)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "χ² curve test needs at least two profiles per group".into(),
        ));
    }
    let points = a.grid().num_bins() + 1;
    let mut statistic = 0.0;
    for i in 0..points {
        let (ma, sa) = mean_and_se2(a, i);
        let (mb, sb) = mean_and_se2(b, i);
        let diff2 = (ma - mb) * (ma - mb);
        let pooled = sa + sb;
        statistic += if pooled > 0.0 {
            diff2 / pooled
        } else if diff2 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    Ok(TestResult {
        method: TestMethod::Chi2,
        statistic,
        dof: Some(points),
        p_value: Some(chi2_sf(statistic, points)?),
        seed: None,
        size_a: a.len(),
        size_b: b.len(),
    })
}

fn canonical_order(x: &AleProfile, y: &AleProfile) -> Ordering {
    let cmp_f = |u: &[f64], v: &[f64]| {
        u.iter()
            .zip(v)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    };
    cmp_f(&x.accumulated, &y.accumulated)
        .then_with(|| cmp_f(&x.local_effects, &y.local_effects))
        .then_with(|| x.prediction_counts.cmp(&y.prediction_counts))
}

/// Permutation test on the RMSE between group average curves.
///
/// Random splits keep the group sizes. The pooled profiles are put in a
/// canonical order first and the smaller group is always the one drawn,
/// so swapping `a` and `b` gives the same p-value.
pub fn permutation_test(
    a: &CurveGroup,
    b: &CurveGroup,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    check_pair(a, b)?;
    if a.len() + b.len() < 4 {
        return Err(Error::InvalidArgument(
            "permutation test needs at least four profiles in total".into(),
        ));
    }
    if n_perm == 0 {
        return Err(Error::InvalidArgument("n_perm must be at least 1".into()));
    }
    let observed = rmse_test(a, b)?.statistic;

    let mut pool: Vec<&AleProfile> = a.profiles.iter().chain(&b.profiles).collect();
    pool.sort_by(|x, y| canonical_order(x, y));
    let total = pool.len();
    let small = a.len().min(b.len());
    let tolerance = 1e-12 * observed.abs().max(1.0);

    let count: usize = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::derived_rng(seed, &[i as u64]);
            let mut chosen = vec![false; total];
            for j in index::sample(&mut rng, total, small) {
                chosen[j] = true;
            }
            let (ga, gb): (Vec<_>, Vec<_>) = pool.iter().zip(&chosen).partition(|(_, &c)| c);
            let ga: Vec<&AleProfile> = ga.into_iter().map(|(p, _)| *p).collect();
            let gb: Vec<&AleProfile> = gb.into_iter().map(|(p, _)| *p).collect();
            let stat = rmse_values(&group_average(&ga), &group_average(&gb));
            usize::from(stat >= observed - tolerance)
        })
        .sum();

    Ok(TestResult {
        method: TestMethod::Permutation,
        statistic: observed,
        dof: None,
        p_value: Some((1 + count) as f64 / (n_perm + 1) as f64),
        seed: Some(seed),
        size_a: a.len(),
        size_b: b.len(),
    })
}
