//! Trains the dual-domain ablation variants and a β sweep on one small
//! dataset and prints the `ablation.csv` table.
//!
//! `cargo run --release --example ablation`

use pulse::cli::{ablation_csv, ablation_plan, AblationRow, Sweep};
use pulse::model::{Ablation, ModelConfig};
use pulse::radarsim::{Dataset, RadarConfig, SynthSpec};
use pulse::training::{evaluate_split, train, TrainConfig};

fn main() -> pulse::Result<()> {
    let spec = SynthSpec {
        sequences: 8,
        frames: 24,
        radar: RadarConfig {
            range_bins: 16,
            angle_bins: 16,
            chirps_per_frame: 8,
            bandwidth_hz: 0.75e9,
            ..RadarConfig::default()
        },
        ..SynthSpec::default()
    };
    let data = Dataset::simulate(&spec)?;
    let base = ModelConfig {
        range_bins: 16,
        angle_bins: 16,
        doppler_bins: 8,
        patch_r: 2,
        patch_a: 2,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 2,
        ..TrainConfig::desk()
    };
    let variants = [Ablation::Full, Ablation::SpatialOnly, Ablation::NaiveConcat, Ablation::Ungated];
    let (plan, skipped) = ablation_plan(&base, &variants, Sweep::Beta);
    for s in skipped {
        println!("skipped {s}");
    }
    let mut rows = Vec::new();
    for (label, cfg) in plan {
        let outcome = train(&data, &cfg, &tc)?;
        let (report, _) = evaluate_split(&outcome.model, &data, "test")?;
        eprintln!("{label} done");
        rows.push(AblationRow { variant: label, report });
    }
    print!("{}", ablation_csv(&rows));
    Ok(())
}
