//! Desk-scale training run: simulate a small cluttered dataset, train the
//! full model, and report test metrics with and without Kalman smoothing.
//!
//! `cargo run --release --example train_desk`

use pulse::metrics::{akv, kalman_smooth, mpjve, KalmanConfig};
use pulse::model::ModelConfig;
use pulse::radarsim::{Dataset, RadarConfig, SynthSpec};
use pulse::training::{evaluate_split, train, TrainConfig};

fn main() -> pulse::Result<()> {
    let spec = SynthSpec {
        seed: 3,
        sequences: 12,
        frames: 32,
        radar: RadarConfig {
            range_bins: 16,
            angle_bins: 16,
            bandwidth_hz: 0.75e9,
            ..RadarConfig::default()
        },
        ..SynthSpec::default()
    };
    let data = Dataset::simulate(&spec)?;
    let model_cfg = ModelConfig {
        range_bins: 16,
        angle_bins: 16,
        patch_r: 2,
        patch_a: 2,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::desk()
    };
    let outcome = train(&data, &model_cfg, &train_cfg)?;
    for r in &outcome.log.records {
        println!(
            "epoch {} loss {:.4} val MPJPE {:.1} MPJVE {:.1} grad norm {:.3}",
            r.epoch, r.loss, r.val_mpjpe, r.val_mpjve, r.grad_norm
        );
    }
    let (report, preds) = evaluate_split(&outcome.model, &data, "test")?;
    println!(
        "test: MPJPE {:.1} PA-MPJPE {:.1} MPJVE {:.1} AKV {:.1} mm",
        report.mpjpe, report.pa_mpjpe, report.mpjve, report.akv
    );
    for p in &preds {
        let smooth = kalman_smooth(&p.pred, &KalmanConfig::default())?;
        println!(
            "  {}: MPJVE {:.1} -> {:.1}, AKV {:.1} -> {:.1} after Kalman",
            p.name,
            mpjve(&p.pred, &p.gt)?,
            mpjve(&smooth, &p.gt)?,
            akv(&p.pred)?,
            akv(&smooth)?
        );
    }
    Ok(())
}
