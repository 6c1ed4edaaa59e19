//! Experiment orchestration, file formats and figures.

pub mod figures;
pub mod io;
pub mod plot;
pub mod sweep;

pub use figures::{sweep_figures, write_figures, Figure};
pub use io::{export_dataset, load_dataset};
pub use plot::{render_plot, PlotKind, PlotStyle, Point, Series};
pub use sweep::{
    build_benchmark, depth_study, explain_model, matched_width, run_sweep, train_model,
    ExperimentRecord, ModelRecord, SweepConfig, SweepOutcome,
};
