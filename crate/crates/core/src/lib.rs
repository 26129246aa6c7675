//! Doppler-prompted mmWave human pose estimation.
//!
//! The crate covers the whole desk-scale pipeline: FMCW radar simulation
//! producing range–angle–Doppler tensors, dual-domain feature construction,
//! the gated cross-attention pose regressor with its ablation variants,
//! training, and pose/temporal metrics.

pub mod cli;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pose;
pub mod radarsim;
pub mod tensorcore;
pub mod training;

pub use error::{Error, Result};
