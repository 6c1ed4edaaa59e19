use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bins::BinGrid;
use crate::error::{Error, Result};

pub const PROFILE_FORMAT: &str = "alegnn-profile";
pub const PROFILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tabular,
    Exact,
    Approximate,
    Aggregate,
    GroundTruth,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tabular => "tabular",
            Method::Exact => "exact",
            Method::Approximate => "approximate",
            Method::Aggregate => "aggregate",
            Method::GroundTruth => "ground-truth",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How per-bin sums of prediction differences are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide each bin by its own number of modified nodes.
    #[default]
    PerBin,
    /// Divide every bin by the total number of modified nodes `m`.
    Global,
}

/// Accumulated local effect curve over a [`BinGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleProfile {
    pub grid: BinGrid,
    /// One local effect per bin.
    pub local_effects: Vec<f64>,
    /// Curve values at the grid edges; `accumulated[0]` is zero unless centered.
    pub accumulated: Vec<f64>,
    pub bin_counts: Vec<usize>,
    pub prediction_counts: Vec<u64>,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub method: Method,
    /// Estimator that produced the inputs of an aggregate.
    #[serde(default)]
    pub aggregated_from: Option<Method>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub centered: bool,
    /// Bins that had no observations; their local effect is recorded as zero.
    #[serde(default)]
    pub empty_bins: Vec<usize>,
    /// Model evaluations spent producing the profile.
    #[serde(default)]
    pub evaluations: usize,
    #[serde(default)]
    pub model_fingerprint: Option<String>,
}

pub(crate) fn accumulate(local_effects: &[f64]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(local_effects.len() + 1);
    let mut total = 0.0;
    acc.push(0.0);
    for d in local_effects {
        total += d;
        acc.push(total);
    }
    acc
}

impl AleProfile {
    /// Profile with accumulated values computed from `local_effects`.
    pub fn from_local_effects(
        grid: BinGrid,
        local_effects: Vec<f64>,
        bin_counts: Vec<usize>,
        prediction_counts: Vec<u64>,
        method: Method,
    ) -> Self {
        let accumulated = accumulate(&local_effects);
        let empty_bins = bin_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect();
        AleProfile {
            grid,
            local_effects,
            accumulated,
            bin_counts,
            prediction_counts,
            k: 0,
            m: 0,
            seed: 0,
            method,
            aggregated_from: None,
            normalization: Normalization::PerBin,
            centered: false,
            empty_bins,
            evaluations: 0,
            model_fingerprint: None,
        }
    }

    pub fn num_points(&self) -> usize {
        self.accumulated.len()
    }

    /// Estimator family used for compatibility checks.
    pub fn family(&self) -> Method {
        self.aggregated_from.unwrap_or(self.method)
    }

    pub fn has_empty_bins(&self) -> bool {
        !self.empty_bins.is_empty()
    }

    pub fn total_predictions(&self) -> u64 {
        self.prediction_counts.iter().sum()
    }

    /// Checks the structural invariants of a profile.
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.num_bins();
        let lens = [
            ("local effects", self.local_effects.len(), n),
            ("accumulated values", self.accumulated.len(), n + 1),
            ("bin counts", self.bin_counts.len(), n),
            ("prediction counts", self.prediction_counts.len(), n),
        ];
        for (what, found, expected) in lens {
            if found != expected {
                return Err(Error::Format(format!(
                    "{what}: expected {expected} entries, found {found}"
                )));
            }
        }
        if self
            .local_effects
            .iter()
            .chain(&self.accumulated)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("profile values".into()));
        }
        if !self.centered && self.accumulated[0] != 0.0 {
            return Err(Error::Format("uncentered profile must start at zero".into()));
        }
        let scale = self
            .accumulated
            .iter()
            .fold(1.0f64, |s, v| s.max(v.abs()));
        for h in 0..n {
            let step = self.accumulated[h + 1] - self.accumulated[h];
            if (step - self.local_effects[h]).abs() > 1e-9 * scale {
                return Err(Error::Format(format!(
                    "accumulated values disagree with local effect of bin {h}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ProfileDocument {
            format: PROFILE_FORMAT.to_string(),
            version: PROFILE_VERSION,
            profile: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProfileDocument = serde_json::from_str(text)?;
        if doc.format != PROFILE_FORMAT {
            return Err(Error::Format(format!("not a profile document: {}", doc.format)));
        }
        if doc.version != PROFILE_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: PROFILE_VERSION,
            });
        }
        doc.profile.validate()?;
        Ok(doc.profile)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileDocument {
    format: String,
    version: u32,
    profile: AleProfile,
}

/// Combines runs as if all their predictions had been made in one run.
///
/// Each run's local effect in a bin is weighted by the number of predictions
/// it made in that bin, so every individual prediction difference carries the
/// same weight in the result.
pub fn aggregate_profiles(profiles: &[AleProfile]) -> Result<AleProfile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidArgument("no profiles to aggregate".into()))?;
    if profiles.len() == 1 {
        return Ok(first.clone());
    }
    for p in profiles {
        if !p.grid.same_as(&first.grid) {
            return Err(Error::GridMismatch);
        }
        if p.family() != first.family() {
            return Err(Error::InvalidArgument(format!(
                "cannot aggregate {} with {} profiles",
                p.family(),
                first.family()
            )));
        }
        if p.centered {
            return Err(Error::InvalidArgument("cannot aggregate centered profiles".into()));
        }
        if p.normalization != Normalization::PerBin {
            return Err(Error::InvalidArgument(
                "aggregation requires per-bin normalized profiles".into(),
            ));
        }
    }

    let n = first.grid.num_bins();
    let mut local_effects = vec![0.0; n];
    let mut bin_counts = vec![0usize; n];
    let mut prediction_counts = vec![0u64; n];
    for h in 0..n {
        let mut weighted = 0.0;
        for p in profiles {
            weighted += p.prediction_counts[h] as f64 * p.local_effects[h];
            bin_counts[h] += p.bin_counts[h];
            prediction_counts[h] += p.prediction_counts[h];
        }
        if prediction_counts[h] > 0 {
            local_effects[h] = weighted / prediction_counts[h] as f64;
        }
    }

    let mut out = AleProfile::from_local_effects(
        first.grid.clone(),
        local_effects,
        bin_counts,
        prediction_counts,
        Method::Aggregate,
    );
    out.empty_bins = (0..n).filter(|&h| out.prediction_counts[h] == 0).collect();
    out.aggregated_from = Some(first.family());
    out.k = if profiles.iter().all(|p| p.k == first.k) {
        first.k
    } else {
        0
    };
    out.m = profiles.iter().map(|p| p.m).sum();
    out.seed = first.seed;
    out.evaluations = profiles.iter().map(|p| p.evaluations).sum();
    out.model_fingerprint = if profiles
        .iter()
        .all(|p| p.model_fingerprint == first.model_fingerprint)
    {
        first.model_fingerprint.clone()
    } else {
        None
    };
    Ok(out)
}

/// Subtracts the occupancy-weighted mean of the curve, using the midpoint
/// of each bin's two edge values. Falls back to an unweighted mean of the
/// edge values when no bin is occupied.
pub fn center_profile(p: &AleProfile) -> Result<AleProfile> {
    if p.centered {
        return Err(Error::AlreadyCentered);
    }
    let total: usize = p.bin_counts.iter().sum();
    let mean = if total > 0 {
        p.bin_counts
            .iter()
            .enumerate()
            .map(|(h, &c)| c as f64 * 0.5 * (p.accumulated[h] + p.accumulated[h + 1]))
            .sum::<f64>()
            / total as f64
    } else {
        p.accumulated.iter().sum::<f64>() / p.accumulated.len() as f64
    };
    let mut out = p.clone();
    for v in &mut out.accumulated {
        *v -= mean;
    }
    out.centered = true;
    Ok(out)
}
