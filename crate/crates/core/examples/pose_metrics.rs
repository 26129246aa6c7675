//! Pose and temporal metrics on a ground-truth walk and two corrupted
//! predictions: a rigidly moved copy and a jittered copy, before and after
//! Kalman smoothing.
//!
//! `cargo run --release --example pose_metrics`

use pulse::metrics::{akv, kalman_smooth, mpjpe, mpjve, pa_mpjpe, per_joint_report, KalmanConfig};
use pulse::pose::{Pose, PoseSequence};
use pulse::radarsim::{simulate_sequence, SynthSpec, JOINT_NAMES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn map(seq: &PoseSequence, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> PoseSequence {
    let frames = seq
        .frames
        .iter()
        .map(|p| Pose::new(p.joints.iter().map(|&x| f(x)).collect()))
        .collect();
    PoseSequence::new(frames, seq.frame_rate)
}

fn show(label: &str, pred: &PoseSequence, gt: &PoseSequence) -> pulse::Result<()> {
    println!(
        "{label:14} MPJPE {:7.2}  PA-MPJPE {:6.2}  MPJVE {:6.2}  AKV {:6.2}",
        mpjpe(pred, gt)?,
        pa_mpjpe(pred, gt, true)?,
        mpjve(pred, gt)?,
        akv(pred)?
    );
    Ok(())
}

fn main() -> pulse::Result<()> {
    let seq = simulate_sequence(&SynthSpec::default(), 0)?;
    let gt = PoseSequence::new(seq.poses, 10.0);
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let moved = map(&gt, |p| [c * p[0] - s * p[1] + 40.0, s * p[0] + c * p[1], p[2] - 25.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Normal::new(0.0, 15.0).expect("valid std");
    let jittered = map(&gt, |p| p.map(|v| v + noise.sample(&mut rng)));
    let smoothed = kalman_smooth(&jittered, &KalmanConfig::default())?;

    show("ground truth", &gt, &gt)?;
    show("rigid copy", &moved, &gt)?;
    show("jittered", &jittered, &gt)?;
    show("kalman", &smoothed, &gt)?;
    println!("per joint (jittered):");
    for row in per_joint_report(&jittered, &gt, &JOINT_NAMES)? {
        println!("  {:12} MPJPE {:5.1} MPJVE {:5.1}", row.name, row.mpjpe, row.mpjve);
    }
    Ok(())
}
