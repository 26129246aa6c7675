//! The Doppler-prompted pose network: spatial and Doppler tokenization,
//! confidence gating, neighborhood-restricted cross-attention, multi-frame
//! aggregation, residual fusion, a transformer over spatial tokens, and the
//! regression head. Every ablation variant is a [`ModelConfig`] switch.

mod config;
pub mod layers;
mod network;

pub use config::{Ablation, ModelConfig, LAYER_NORM_EPS};
pub use layers::{
    aggregate_doppler_multiframe, cell_coords, conditional_cross_attention, gate, neighborhood,
    patch_coords, regress, residual_update, spatial_transformer, tokenize_doppler, tokenize_spatial,
    CrossAttention,
};
pub use network::{init_params, prepare_window, Built, ForwardOutput, PulseModel, WindowFeatures};

#[cfg(test)]
mod tests;
