//! Parametric articulated skeleton.
//!
//! Coordinates are radar-centric meters: `x` lateral, `y` along boresight,
//! `z` up, with the radar at chest height. Every trajectory is a finite sum
//! of sinusoids, so joints are C¹ (indeed C^∞) in time.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pose::{Pose, PoseSequence};

pub const JOINT_NAMES: [&str; 8] = [
    "head", "torso", "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_ankle", "r_ankle",
];
pub const NUM_JOINTS: usize = JOINT_NAMES.len();

const UPPER_ARM: f64 = 0.30;
const FOREARM: f64 = 0.28;
const LEG: f64 = 0.85;
const NECK: f64 = 0.55;
const SHOULDER_HALF_WIDTH: f64 = 0.20;
const SHOULDER_HEIGHT: f64 = 0.30;
const HIP_HALF_WIDTH: f64 = 0.10;
const HIP_DROP: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Walk,
    Wave,
    Still,
    Jitter,
}

impl Motion {
    pub const ALL: [Motion; 4] = [Motion::Walk, Motion::Wave, Motion::Still, Motion::Jitter];
}

impl FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" => Ok(Motion::Walk),
            "wave" => Ok(Motion::Wave),
            "still" => Ok(Motion::Still),
            "jitter" => Ok(Motion::Jitter),
            other => Err(Error::Usage(format!(
                "unknown motion `{other}` (expected walk, wave, still or jitter)"
            ))),
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Motion::Walk => "walk",
            Motion::Wave => "wave",
            Motion::Still => "still",
            Motion::Jitter => "jitter",
        };
        f.write_str(s)
    }
}

/// `offset + Σ amp·sin(2π·freq·t + phase)`.
#[derive(Debug, Clone, Default, PartialEq)]
struct Curve {
    offset: f64,
    terms: Vec<(f64, f64, f64)>,
}

impl Curve {
    fn constant(offset: f64) -> Self {
        Self {
            offset,
            terms: Vec::new(),
        }
    }

    fn with(mut self, amp: f64, freq: f64, phase: f64) -> Self {
        self.terms.push((amp, freq, phase));
        self
    }

    fn at(&self, t: f64) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|(a, f, p)| a * (TAU * f * t + p).sin())
                .sum::<f64>()
    }

    /// Upper bound on `|d/dt|`.
    fn speed_bound(&self) -> f64 {
        self.terms.iter().map(|(a, f, _)| a.abs() * TAU * f).sum()
    }
}

/// Limb orientation from a sagittal swing (toward the radar is positive) and
/// a frontal abduction angle. Returns a unit vector.
fn limb_dir(swing: f64, abduct: f64, side: f64) -> [f64; 3] {
    [
        side * abduct.sin() * swing.cos(),
        -swing.sin(),
        -abduct.cos() * swing.cos(),
    ]
}

fn add(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Named points of the body at one instant: the 8 output joints plus the
/// shoulders and hips used to lay out bones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPoints {
    pub joints: [[f64; 3]; NUM_JOINTS],
    pub shoulders: [[f64; 3]; 2],
    pub hips: [[f64; 3]; 2],
}

/// Index into [`BodyPoints::all`].
pub type PointId = usize;
pub const HEAD: PointId = 0;
pub const TORSO: PointId = 1;
pub const L_ELBOW: PointId = 2;
pub const R_ELBOW: PointId = 3;
pub const L_WRIST: PointId = 4;
pub const R_WRIST: PointId = 5;
pub const L_ANKLE: PointId = 6;
pub const R_ANKLE: PointId = 7;
pub const L_SHOULDER: PointId = 8;
pub const R_SHOULDER: PointId = 9;
pub const L_HIP: PointId = 10;
pub const R_HIP: PointId = 11;

impl BodyPoints {
    pub fn all(&self) -> [[f64; 3]; 12] {
        let mut out = [[0.0; 3]; 12];
        out[..NUM_JOINTS].copy_from_slice(&self.joints);
        out[8] = self.shoulders[0];
        out[9] = self.shoulders[1];
        out[10] = self.hips[0];
        out[11] = self.hips[1];
        out
    }
}

/// Seeded parametric trajectory of the whole skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonMotion {
    pub motion: Motion,
    torso: [Curve; 3],
    // [left, right] × (swing, abduct) for upper arm and forearm; leg swing.
    upper_arm: [[Curve; 2]; 2],
    forearm: [[Curve; 2]; 2],
    leg: [Curve; 2],
}

impl SkeletonMotion {
    pub fn sample(seed: u64, motion: Motion) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = rng.gen_range(-0.3..0.3);
        let y0 = rng.gen_range(1.6..2.0);
        let c = Curve::constant;
        let mut torso = [c(x0), c(y0), c(0.0)];
        let rest_abduct = rng.gen_range(0.05..0.15);
        let rest_bend = rng.gen_range(0.1..0.3);
        let mut upper_arm = [
            [c(0.0), c(rest_abduct)],
            [c(0.0), c(rest_abduct)],
        ];
        let mut forearm = [
            [c(rest_bend), c(rest_abduct)],
            [c(rest_bend), c(rest_abduct)],
        ];
        let mut leg = [c(0.0), c(0.0)];

        match motion {
            Motion::Still => {}
            Motion::Walk => {
                // Wrist speed ≤ 2π·0.05·0.2 + (UPPER_ARM + FOREARM)·0.3·2π·0.8
                // ≈ 0.94 m/s, i.e. < 100 mm per frame at 10 Hz.
                let f = rng.gen_range(0.6..0.8);
                let a = rng.gen_range(0.2..0.3);
                let p = rng.gen_range(0.0..TAU);
                let b = rng.gen_range(0.2..0.3);
                torso[1] = c(y0).with(0.2, 0.05, rng.gen_range(0.0..TAU));
                for (side, sign) in [(0, 1.0), (1, -1.0)] {
                    upper_arm[side][0] = c(0.0).with(sign * a, f, p);
                    forearm[side][0] = c(rest_bend).with(sign * a, f, p);
                    leg[side] = c(0.0).with(-sign * b, f, p);
                }
            }
            Motion::Wave => {
                let f = rng.gen_range(1.0..1.5);
                let p = rng.gen_range(0.0..TAU);
                let raise = rng.gen_range(1.8..2.2);
                upper_arm[1] = [c(0.2), c(raise)];
                forearm[1] = [c(0.3), c(raise + 0.5).with(0.5, f, p)];
                upper_arm[0][0] = c(0.0).with(0.05, 0.5 * f, p);
            }
            Motion::Jitter => {
                let wobble = |base: f64, rng: &mut ChaCha8Rng| {
                    c(base)
                        .with(rng.gen_range(0.02..0.05), rng.gen_range(1.5..3.0), rng.gen_range(0.0..TAU))
                        .with(rng.gen_range(0.02..0.05), rng.gen_range(1.5..3.0), rng.gen_range(0.0..TAU))
                };
                for side in 0..2 {
                    upper_arm[side][0] = wobble(0.0, &mut rng);
                    forearm[side][0] = wobble(rest_bend, &mut rng);
                    leg[side] = wobble(0.0, &mut rng);
                }
                for (axis, base) in [(0, x0), (1, y0)] {
                    torso[axis] = c(base).with(0.01, rng.gen_range(0.5..1.0), rng.gen_range(0.0..TAU));
                }
            }
        }
        Self {
            motion,
            torso,
            upper_arm,
            forearm,
            leg,
        }
    }

    pub fn points_at(&self, t: f64) -> BodyPoints {
        let torso = [self.torso[0].at(t), self.torso[1].at(t), self.torso[2].at(t)];
        let head = add(torso, [0.0, 0.0, 1.0], NECK);
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        let mut shoulders = [[0.0; 3]; 2];
        let mut hips = [[0.0; 3]; 2];
        joints[HEAD] = head;
        joints[TORSO] = torso;
        for (side, sign) in [(0usize, -1.0), (1usize, 1.0)] {
            let shoulder = add(torso, [sign * SHOULDER_HALF_WIDTH, 0.0, SHOULDER_HEIGHT], 1.0);
            let ua = &self.upper_arm[side];
            let fa = &self.forearm[side];
            let elbow = add(shoulder, limb_dir(ua[0].at(t), ua[1].at(t), sign), UPPER_ARM);
            let wrist = add(elbow, limb_dir(fa[0].at(t), fa[1].at(t), sign), FOREARM);
            let hip = add(torso, [sign * HIP_HALF_WIDTH, 0.0, -HIP_DROP], 1.0);
            let ankle = add(hip, limb_dir(self.leg[side].at(t), 0.0, sign), LEG);
            shoulders[side] = shoulder;
            hips[side] = hip;
            joints[L_ELBOW + side] = elbow;
            joints[L_WRIST + side] = wrist;
            joints[L_ANKLE + side] = ankle;
        }
        BodyPoints {
            joints,
            shoulders,
            hips,
        }
    }

    /// Upper bound on wrist speed in m/s from the curve coefficients.
    pub fn wrist_speed_bound(&self) -> f64 {
        let torso: f64 = self.torso.iter().map(Curve::speed_bound).sum();
        (0..2)
            .map(|s| {
                let ua = self.upper_arm[s][0].speed_bound() + self.upper_arm[s][1].speed_bound();
                let fa = self.forearm[s][0].speed_bound() + self.forearm[s][1].speed_bound();
                torso + UPPER_ARM * ua + FOREARM * fa
            })
            .fold(0.0, f64::max)
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let p = self.points_at(t);
        Pose::new(
            p.joints
                .iter()
                .map(|j| [j[0] * 1e3, j[1] * 1e3, j[2] * 1e3])
                .collect(),
        )
    }
}

/// `T` poses (mm) of a seeded skeleton sampled at `frame_rate`.
pub fn synth_skeleton_sequence(
    seed: u64,
    frames: usize,
    motion: Motion,
    frame_rate: f64,
) -> Result<PoseSequence> {
    if frames < 2 {
        return Err(Error::Usage(format!("need at least 2 frames, got {frames}")));
    }
    if !(frame_rate > 0.0) {
        return Err(Error::Usage(format!("frame rate must be positive, got {frame_rate}")));
    }
    let skel = SkeletonMotion::sample(seed, motion);
    let poses = (0..frames)
        .map(|i| skel.pose_at(i as f64 / frame_rate))
        .collect();
    Ok(PoseSequence::new(poses, frame_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::distance;

    #[test]
    fn unknown_motion_is_usage_error() {
        assert!(matches!("run".parse::<Motion>(), Err(Error::Usage(_))));
        for m in Motion::ALL {
            assert_eq!(m.to_string().parse::<Motion>().unwrap(), m);
        }
    }

    #[test]
    fn still_is_constant_and_seeded() {
        let s = synth_skeleton_sequence(3, 20, Motion::Still, 10.0).unwrap();
        assert!(s.frames.windows(2).all(|w| w[0] == w[1]));
        let a = synth_skeleton_sequence(9, 16, Motion::Walk, 10.0).unwrap();
        let b = synth_skeleton_sequence(9, 16, Motion::Walk, 10.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_skeleton_sequence(10, 16, Motion::Walk, 10.0).unwrap());
        assert!(synth_skeleton_sequence(1, 1, Motion::Walk, 10.0).is_err());
    }

    #[test]
    fn walking_wrists_move_less_than_100mm_per_frame() {
        for seed in 0..50 {
            let skel = SkeletonMotion::sample(seed, Motion::Walk);
            assert!(skel.wrist_speed_bound() * 0.1 < 0.1, "seed {seed}");
            let s = synth_skeleton_sequence(seed, 200, Motion::Walk, 10.0).unwrap();
            for w in s.frames.windows(2) {
                for j in [L_WRIST, R_WRIST] {
                    assert!(distance(&w[0].joints[j], &w[1].joints[j]) < 100.0);
                }
            }
        }
    }

    #[test]
    fn bones_keep_their_length() {
        let skel = SkeletonMotion::sample(1, Motion::Wave);
        for i in 0..10 {
            let p = skel.points_at(i as f64 * 0.13);
            let d = distance(&p.joints[R_ELBOW], &p.joints[R_WRIST]);
            assert!((d - FOREARM).abs() < 1e-12);
            let d = distance(&p.hips[0], &p.joints[L_ANKLE]);
            assert!((d - LEG).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectories_are_continuously_differentiable() {
        // Central and one-sided differences agree to O(h) everywhere.
        let skel = SkeletonMotion::sample(4, Motion::Jitter);
        let h = 1e-5;
        for i in 0..50 {
            let t = i as f64 * 0.071;
            let (m, c, p) = (skel.points_at(t - h), skel.points_at(t), skel.points_at(t + h));
            for j in 0..NUM_JOINTS {
                for k in 0..3 {
                    let left = (c.joints[j][k] - m.joints[j][k]) / h;
                    let right = (p.joints[j][k] - c.joints[j][k]) / h;
                    assert!((left - right).abs() < 1e-3);
                }
            }
        }
    }
}
