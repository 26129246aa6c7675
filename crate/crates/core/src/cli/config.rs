//! `key=value` run configuration covering synthesis, model and training.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{parse_flag, KeyValues};
use crate::model::ModelConfig;
use crate::radarsim::dataset::parse_motions;
use crate::radarsim::{ClutterSpec, RadarConfig, SynthSpec};
use crate::training::TrainConfig;

/// Global seed fallback when neither the config file nor a flag sets `seed`.
pub const SEED_ENV: &str = "PULSE_SEED";

/// File written next to every command's outputs.
pub const RESOLVED_CONFIG: &str = "resolved.config";

/// Merged configuration. `seed` drives both synthesis and training; `R`,
/// `A`, `D` are shared by the radar grid and the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::desk(),
        }
    }
}

fn synth_key_values(s: &SynthSpec) -> KeyValues {
    let (r, c) = (&s.radar, &s.clutter);
    let mut kv = KeyValues::new();
    kv.set("sequences", s.sequences);
    kv.set("frames", s.frames);
    kv.set("motion", s.motions.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","));
    kv.set("clutter", c.enabled);
    kv.set("clutter_statics", c.statics);
    kv.set("clutter_oscillators", c.oscillators);
    kv.set("oscillator_amplitude_mps", c.oscillator_amplitude_mps);
    kv.set("oscillator_reflectivity", c.oscillator_reflectivity);
    kv.set("multipath", c.multipath);
    kv.set("ghost_attenuation", c.ghost_attenuation);
    kv.set("carrier_hz", r.carrier_hz);
    kv.set("bandwidth_hz", r.bandwidth_hz);
    kv.set("chirp_duration_s", r.chirp_duration_s);
    kv.set("fast_samples_per_chirp", r.fast_samples_per_chirp);
    kv.set("virtual_elements", r.virtual_elements);
    kv.set("noise_std", r.noise_std);
    kv.set("frame_rate", r.frame_rate_hz);
    kv.set("taper", s.window);
    kv.set("val_fraction", s.val_fraction);
    kv.set("test_fraction", s.test_fraction);
    kv
}

fn synth_from(kv: &KeyValues, base: &SynthSpec, seed: u64, grid: (usize, usize, usize)) -> Result<SynthSpec> {
    let (b, bc) = (&base.radar, &base.clutter);
    let flag = |key: &str, default: bool| kv.get(key).map_or(Ok(default), parse_flag);
    let radar = RadarConfig {
        carrier_hz: kv.parse_or("carrier_hz", b.carrier_hz)?,
        bandwidth_hz: kv.parse_or("bandwidth_hz", b.bandwidth_hz)?,
        chirp_duration_s: kv.parse_or("chirp_duration_s", b.chirp_duration_s)?,
        chirps_per_frame: grid.2,
        fast_samples_per_chirp: kv.parse_or("fast_samples_per_chirp", b.fast_samples_per_chirp)?,
        virtual_elements: kv.parse_or("virtual_elements", b.virtual_elements)?,
        range_bins: grid.0,
        angle_bins: grid.1,
        noise_std: kv.parse_or("noise_std", b.noise_std)?,
        frame_rate_hz: kv.parse_or("frame_rate", b.frame_rate_hz)?,
    };
    let clutter = ClutterSpec {
        enabled: flag("clutter", bc.enabled)?,
        statics: kv.parse_or("clutter_statics", bc.statics)?,
        oscillators: kv.parse_or("clutter_oscillators", bc.oscillators)?,
        oscillator_amplitude_mps: kv.parse_or("oscillator_amplitude_mps", bc.oscillator_amplitude_mps)?,
        oscillator_reflectivity: kv.parse_or("oscillator_reflectivity", bc.oscillator_reflectivity)?,
        multipath: flag("multipath", bc.multipath)?,
        ghost_attenuation: kv.parse_or("ghost_attenuation", bc.ghost_attenuation)?,
    };
    Ok(SynthSpec {
        seed,
        sequences: kv.parse_or("sequences", base.sequences)?,
        frames: kv.parse_or("frames", base.frames)?,
        motions: match kv.get("motion") {
            Some(raw) => parse_motions(raw)?,
            None => base.motions.clone(),
        },
        clutter,
        radar,
        window: kv.parse_or("taper", base.window)?,
        val_fraction: kv.parse_or("val_fraction", base.val_fraction)?,
        test_fraction: kv.parse_or("test_fraction", base.test_fraction)?,
    })
}

impl RunConfig {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("seed", self.train.seed);
        for part in [
            synth_key_values(&self.synth),
            self.model.to_key_values(),
            self.train.to_key_values(),
        ] {
            for (k, v) in part.iter() {
                kv.set(k, v);
            }
        }
        kv
    }

    /// Every key a config file or flag may set.
    pub fn known_keys() -> Vec<String> {
        Self::default().to_key_values().keys().map(str::to_string).collect()
    }

    /// Applies `kv` on top of `self`. Unknown keys are rejected.
    pub fn merged(&self, kv: &KeyValues) -> Result<Self> {
        let known = Self::known_keys();
        if let Some(k) = kv.keys().find(|k| !known.iter().any(|n| n == k)) {
            return Err(Error::Config(format!("unknown config key '{k}'")));
        }
        let model = ModelConfig::from_key_values(kv, &self.model)?;
        let train = TrainConfig::from_key_values(kv, &self.train)?;
        let grid = (model.range_bins, model.angle_bins, model.doppler_bins);
        let synth = synth_from(kv, &self.synth, train.seed, grid)?;
        Ok(Self { synth, model, train })
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        Self::default().merged(kv)
    }

    /// Defaults, then the optional config file, then `overrides`. When no
    /// layer sets `seed`, the `PULSE_SEED` environment variable is used.
    pub fn resolve(file: Option<&Path>, overrides: &KeyValues) -> Result<Self> {
        let mut layers = Vec::new();
        if let Some(path) = file {
            layers.push(KeyValues::read(path)?);
        }
        layers.push(overrides.clone());
        let mut merged = KeyValues::new();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            seed.parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{seed}' is not an unsigned integer")))?;
            merged.set("seed", seed);
        }
        for layer in &layers {
            for (k, v) in layer.iter() {
                merged.set(k, v);
            }
        }
        Self::from_key_values(&merged)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.to_key_values().write(&dir.join(RESOLVED_CONFIG))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ablation;
    use crate::radarsim::Motion;

    #[test]
    fn round_trip_and_shared_keys() {
        let kv = KeyValues::parse("seed=5\nR=16\nA=8\nD=4\nvirtual_elements=8\nvariant=spatial_only\nclutter=off\nmotion=wave,still\nlr=0.01\ntaper=hann\n").unwrap();
        let cfg = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!((cfg.synth.seed, cfg.train.seed), (5, 5));
        assert_eq!((cfg.synth.radar.range_bins, cfg.model.range_bins), (16, 16));
        assert_eq!(cfg.synth.radar.chirps_per_frame, 4);
        assert_eq!(cfg.model.ablation, Ablation::SpatialOnly);
        assert!(!cfg.synth.clutter.enabled);
        assert_eq!(cfg.synth.motions, vec![Motion::Wave, Motion::Still]);
        assert_eq!(cfg.train.lr, 0.01);
        let again = RunConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_key_values().to_text(), cfg.to_key_values().to_text());
    }

    #[test]
    fn unknown_and_malformed_keys_are_config_errors() {
        let bad = KeyValues::parse("learning_rate=0.1").unwrap();
        assert!(matches!(RunConfig::from_key_values(&bad), Err(Error::Config(_))));
        let bad = KeyValues::parse("epochs=many").unwrap();
        assert!(matches!(RunConfig::from_key_values(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.config");
        std::fs::write(&path, "epochs=3\nbatch=2\n").unwrap();
        let mut o = KeyValues::new();
        o.set("epochs", 9);
        let cfg = RunConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.batch), (9, 2));
    }
}
