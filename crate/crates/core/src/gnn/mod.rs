//! Minimal GCN/GAT encoders with a dot-product link decoder.

mod backward;
mod checkpoint;
mod forward;
mod metrics;
mod model;
mod train;

pub use backward::{loss_and_gradients, Gradients, LayerGradients};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use forward::{
    forward, forward_with_features, gat_forward, gcn_forward, predict_links, sigmoid,
    InferenceSession,
};
pub use metrics::{auc_roc, evaluate, f1_score, Metrics};
pub use model::{param_count, Arch, GnnModel, Layer, Norm, LEAKY_SLOPE, NORM_EPS};
pub use train::{train, TrainConfig};
