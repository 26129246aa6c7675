//! Joint coordinates in millimeters.

use crate::error::{Error, Result};

/// `J × 3` joint positions in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joints: Vec<[f64; 3]>,
}

impl Pose {
    pub fn new(joints: Vec<[f64; 3]>) -> Self {
        Self { joints }
    }

    pub fn zeros(j: usize) -> Self {
        Self {
            joints: vec![[0.0; 3]; j],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Row-major `J·3` values.
    pub fn flat(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(3) {
            return Err(Error::Data(format!(
                "pose needs a multiple of 3 values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            joints: values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().flatten().all(|v| v.is_finite())
    }

    pub fn translated(&self, offset: [f64; 3]) -> Self {
        Self {
            joints: self
                .joints
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
        }
    }
}

/// Poses sampled at a fixed frame rate; velocities use a one-frame step.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<Pose>,
    pub frame_rate: f64,
}

impl PoseSequence {
    pub fn new(frames: Vec<Pose>, frame_rate: f64) -> Self {
        Self { frames, frame_rate }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.frames.first().map_or(0, Pose::num_joints)
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
