//! Trains the full model briefly and relates its frame gate score ḡ_t to
//! ground-truth motion: Pearson r and MPJVE per gate quantile.
//!
//! `cargo run --release --example gate_diagnostics`

use pulse::metrics::{gate_motion_diag, GateAggregation};
use pulse::model::ModelConfig;
use pulse::radarsim::{Dataset, RadarConfig, SynthSpec};
use pulse::training::{evaluate_split, train, TrainConfig};

fn main() -> pulse::Result<()> {
    let spec = SynthSpec {
        sequences: 10,
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
    let cfg = ModelConfig {
        range_bins: 16,
        angle_bins: 16,
        patch_r: 2,
        patch_a: 2,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 3,
        gamma: 0.1,
        ..TrainConfig::desk()
    };
    let model = train(&data, &cfg, &tc)?.model;
    let (_, preds) = evaluate_split(&model, &data, "test")?;
    let seqs = preds.iter().map(|p| p.gate_sequence()).collect::<pulse::Result<Vec<_>>>()?;
    for agg in [GateAggregation::BodyCells, GateAggregation::Global] {
        let diag = gate_motion_diag(&seqs, 4, agg)?;
        match diag.pearson {
            Some(r) => println!("{agg}: {} frames, pearson(g_bar, v) = {r:.3}", diag.rows.len()),
            None => println!("{agg}: pearson undefined"),
        }
        for b in &diag.bins {
            println!("  bin {} g in [{:.4}, {:.4}] {} frames MPJVE {:.1}", b.bin, b.g_lo, b.g_hi, b.frames, b.mpjve);
        }
    }
    Ok(())
}
