//! Accumulated local effects: grids, profiles and estimators.

mod bins;
mod link;
mod profile;
mod tabular;

pub use bins::{make_bins, BinGrid, BinStrategy};
pub use link::{
    ale_approximate, ale_exact, explain, explain_detailed, explain_subsets, feature_grid,
    sample_subsets, AleMode, AleRequest, NodeEffect, Subsets,
};
pub use profile::{
    aggregate_profiles, center_profile, AleProfile, Method, Normalization, PROFILE_FORMAT,
    PROFILE_VERSION,
};
pub use tabular::ale_tabular;
