//! FMCW radar simulation: articulated skeletons, clutter and multipath
//! scenes, IF cube synthesis, and the range/Doppler/angle DFT pipeline.

pub mod config;
pub mod dataset;
pub mod fft;
pub mod render;
pub mod scene;
pub mod skeleton;

pub use config::RadarConfig;
pub use dataset::{emit_dataset, simulate_sequence, Dataset, Sequence, Splits, SynthSpec};
pub use render::{rad_fft, render_frame, render_rad, IfCube, Window};
pub use scene::{ClutterSpec, Scatterer, Scene};
pub use skeleton::{synth_skeleton_sequence, Motion, JOINT_NAMES, NUM_JOINTS};
