//! One eval-mode forward pass per model variant on the same synthetic
//! frame, with the learned-gate statistics of the gated variants.
//!
//! `cargo run --release --example model_forward`

use pulse::model::{Ablation, ModelConfig, PulseModel};
use pulse::radarsim::{simulate_sequence, SynthSpec};

fn main() -> pulse::Result<()> {
    let seq = simulate_sequence(&SynthSpec::default(), 1)?;
    let frame = &seq.frames[5];
    for ablation in Ablation::ALL {
        let cfg = ModelConfig {
            ablation,
            ..ModelConfig::default()
        };
        let model = PulseModel::new(cfg.clone(), 7)?;
        let out = model.forward(std::slice::from_ref(frame), false, 0)?;
        let gates = match &out.gates {
            Some(g) => {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                format!("{} gates, mean {mean:.3}", g.len())
            }
            None => "no gates".to_string(),
        };
        println!(
            "{ablation:18} {:6} params, {} spatial / {} Doppler tokens, {gates}, head joint {:.1?}",
            model.params.num_values(),
            cfg.spatial_tokens(),
            cfg.doppler_tokens(),
            out.pose.joints[0]
        );
    }
    Ok(())
}
