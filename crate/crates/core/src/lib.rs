//! Accumulated local effect explanations for GNN link prediction.
//!
//! The crate bundles a CSR graph store, a synthetic benchmark with a known
//! link law, small GCN/GAT encoders with hand-written gradients, the exact
//! and approximate ALE estimators, curve-comparison statistics and the
//! experiment harness used by the `alegnn` binary.

pub mod ale;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod seed;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
pub use graph::{build_graph, Graph};
