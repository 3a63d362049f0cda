//! Network assembly: config, weights, forward pass, losses and op counts.

mod accounting;
mod config;
mod forward;
mod loss;
mod weights;

pub use accounting::{count_params_and_macs, OpCounts};
pub use config::{LiptConfig, Preset};
pub use forward::forward;
pub use loss::{charbonnier_loss, charbonnier_term, charbonnier_term_grad, l1_loss, CHARBONNIER_EPS};
pub use weights::{BlockWeights, ConvBlock, LiptWeights, CONFIG_ENTRY, RESIDUAL_GAIN};

/// Collapses every HRM of `w` into plain 3x3 convs.
pub fn fuse_model(w: &LiptWeights) -> crate::Result<LiptWeights> {
    w.fuse()
}
