//! Writes a synthetic dataset to disk (RDT frames, poses.csv, manifest) and
//! loads it back.
//!
//! `cargo run --release --example synth_dataset -- /tmp/pulse-data`

use std::path::PathBuf;

use pulse::radarsim::{emit_dataset, Dataset, SynthSpec};

fn main() -> pulse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pulse-synth-example"));
    let spec = SynthSpec {
        seed: 7,
        sequences: 6,
        frames: 16,
        ..SynthSpec::default()
    };
    let summary = emit_dataset(&spec, &out)?;
    println!("wrote {} frames to {}", summary.frames_written, out.display());
    let data = Dataset::load(&out)?;
    for seq in &data.sequences {
        println!("  {} ({}): {} frames, grid {:?}", seq.name, seq.motion, seq.frames.len(), seq.frames[0].dims());
    }
    println!("splits: train {:?} val {:?} test {:?}", data.splits.train, data.splits.val, data.splits.test);
    println!("matches the in-memory simulation: {}", data == Dataset::simulate(&spec)?);
    Ok(())
}
