//! Writes a `PULSECKP` checkpoint, reads it back, and shows that a
//! mismatched model config is rejected with the differing keys.
//!
//! `cargo run --release --example checkpoint`

use pulse::cli::Checkpoint;
use pulse::model::{Ablation, ModelConfig, PulseModel};

fn main() -> pulse::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| pulse::Error::io("tempdir", e))?;
    let path = dir.path().join("model.ckpt");
    let cfg = ModelConfig::default();
    let ckpt = Checkpoint {
        model: PulseModel::new(cfg.clone(), 11)?,
        seed: 11,
    };
    ckpt.save(&path)?;
    let bytes = std::fs::read(&path).map_err(|e| pulse::Error::io(&path, e))?;
    println!("{} bytes, magic {:?}", bytes.len(), String::from_utf8_lossy(&bytes[..8]));

    let back = Checkpoint::load_expecting(&path, &cfg)?;
    println!("reloaded seed {}, byte-identical re-encode: {}", back.seed, back.encode() == bytes);

    let other = ModelConfig {
        ablation: Ablation::NaiveConcat,
        embed_dim: 32,
        ..cfg
    };
    match Checkpoint::load_expecting(&path, &other) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected (exit code {}): {e}", e.exit_code()),
    }
    Ok(())
}
