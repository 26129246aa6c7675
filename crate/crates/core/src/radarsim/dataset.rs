//! Synthetic dataset emission and loading.
//!
//! Layout: `manifest.txt`, `frames/SEQ_FRAME.rdt`, and `poses.csv` with
//! header `seq,frame,joint,x_mm,y_mm,z_mm`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RadarConfig;
use super::render::{render_rad, Window};
use super::scene::{ClutterSpec, Scene};
use super::skeleton::{Motion, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::features::RadTensor;
use crate::io::{parse_flag, read_rdt, write_rdt, KeyValues};
use crate::pose::Pose;
use crate::tensorcore::derive_seed;

pub const POSES_HEADER: &str = "seq,frame,joint,x_mm,y_mm,z_mm";

const SPLIT_STREAM: u64 = u64::MAX;

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub sequences: usize,
    pub frames: usize,
    /// Cycled over sequences.
    pub motions: Vec<Motion>,
    pub clutter: ClutterSpec,
    pub radar: RadarConfig,
    pub window: Window,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            sequences: 4,
            frames: 64,
            motions: vec![Motion::Walk, Motion::Wave, Motion::Jitter, Motion::Walk],
            clutter: ClutterSpec::default(),
            radar: RadarConfig::default(),
            window: Window::Rect,
            val_fraction: 0.2,
            test_fraction: 0.2,
        }
    }
}

/// Sequence names per split; disjoint by construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Usage(format!("unknown split '{other}' (train|val|test)"))),
        }
    }
}

pub fn sequence_name(i: usize) -> String {
    format!("s{i:03}")
}

fn motions_text(m: &[Motion]) -> String {
    m.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
}

pub fn parse_motions(raw: &str) -> Result<Vec<Motion>> {
    if raw == "mixed" {
        return Ok(SynthSpec::default().motions);
    }
    raw.split(',').map(|s| s.trim().parse()).collect()
}

fn split_sequences(spec: &SynthSpec) -> Result<Splits> {
    let n = spec.sequences;
    if n == 0 || spec.frames < 2 {
        return Err(Error::Usage("need at least one sequence of at least 2 frames".into()));
    }
    for f in [spec.val_fraction, spec.test_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!("split fraction {f} outside [0,1)")));
        }
    }
    let mut names: Vec<String> = (0..n).map(sequence_name).collect();
    names.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SPLIT_STREAM)));
    let want = |f: f64| if f > 0.0 && n >= 3 { ((f * n as f64).round() as usize).max(1) } else { 0 };
    let n_test = want(spec.test_fraction);
    let n_val = want(spec.val_fraction);
    if n_test + n_val >= n {
        return Err(Error::Config(format!(
            "{n} sequences leave no training data after {n_val} val + {n_test} test"
        )));
    }
    let sorted = |v: &[String]| {
        let mut v = v.to_vec();
        v.sort();
        v
    };
    Ok(Splits {
        test: sorted(&names[..n_test]),
        val: sorted(&names[n_test..n_test + n_val]),
        train: sorted(&names[n_test + n_val..]),
    })
}

fn manifest(spec: &SynthSpec, splits: &Splits) -> KeyValues {
    let r = &spec.radar;
    let c = &spec.clutter;
    let mut kv = KeyValues::new();
    kv.set("seed", spec.seed);
    kv.set("R", r.range_bins);
    kv.set("A", r.angle_bins);
    kv.set("D", r.doppler_bins());
    kv.set("J", NUM_JOINTS);
    kv.set("frame_rate", r.frame_rate_hz);
    kv.set("sequences", spec.sequences);
    kv.set("frames", spec.frames);
    kv.set("motions", motions_text(&spec.motions));
    kv.set("carrier_hz", r.carrier_hz);
    kv.set("bandwidth_hz", r.bandwidth_hz);
    kv.set("chirp_duration_s", r.chirp_duration_s);
    kv.set("fast_samples_per_chirp", r.fast_samples_per_chirp);
    kv.set("virtual_elements", r.virtual_elements);
    kv.set("noise_std", r.noise_std);
    kv.set("window", spec.window);
    kv.set("clutter", c.enabled);
    kv.set("clutter_statics", c.statics);
    kv.set("clutter_oscillators", c.oscillators);
    kv.set("oscillator_amplitude_mps", c.oscillator_amplitude_mps);
    kv.set("oscillator_reflectivity", c.oscillator_reflectivity);
    kv.set("multipath", c.multipath);
    kv.set("ghost_attenuation", c.ghost_attenuation);
    kv.set("val_fraction", spec.val_fraction);
    kv.set("test_fraction", spec.test_fraction);
    kv.set("train", splits.train.join(","));
    kv.set("val", splits.val.join(","));
    kv.set("test", splits.test.join(","));
    kv
}

fn split_list(raw: &str) -> Vec<String> {
    raw.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
}

/// Reads back a manifest written by [`emit_dataset`].
pub fn parse_manifest(kv: &KeyValues) -> Result<(SynthSpec, Splits)> {
    let radar = RadarConfig {
        carrier_hz: kv.parse_value("carrier_hz")?,
        bandwidth_hz: kv.parse_value("bandwidth_hz")?,
        chirp_duration_s: kv.parse_value("chirp_duration_s")?,
        chirps_per_frame: kv.parse_value("D")?,
        fast_samples_per_chirp: kv.parse_value("fast_samples_per_chirp")?,
        virtual_elements: kv.parse_value("virtual_elements")?,
        range_bins: kv.parse_value("R")?,
        angle_bins: kv.parse_value("A")?,
        noise_std: kv.parse_value("noise_std")?,
        frame_rate_hz: kv.parse_value("frame_rate")?,
    };
    radar.validate()?;
    let clutter = ClutterSpec {
        enabled: parse_flag(kv.require("clutter")?)?,
        statics: kv.parse_value("clutter_statics")?,
        oscillators: kv.parse_value("clutter_oscillators")?,
        oscillator_amplitude_mps: kv.parse_value("oscillator_amplitude_mps")?,
        oscillator_reflectivity: kv.parse_value("oscillator_reflectivity")?,
        multipath: parse_flag(kv.require("multipath")?)?,
        ghost_attenuation: kv.parse_value("ghost_attenuation")?,
    };
    let j: usize = kv.parse_value("J")?;
    if j != NUM_JOINTS {
        return Err(Error::Data(format!("manifest J={j}, simulator emits {NUM_JOINTS}")));
    }
    let spec = SynthSpec {
        seed: kv.parse_value("seed")?,
        sequences: kv.parse_value("sequences")?,
        frames: kv.parse_value("frames")?,
        motions: parse_motions(kv.require("motions")?)?,
        clutter,
        radar,
        window: kv.parse_value("window")?,
        val_fraction: kv.parse_value("val_fraction")?,
        test_fraction: kv.parse_value("test_fraction")?,
    };
    let splits = Splits {
        train: split_list(kv.require("train")?),
        val: split_list(kv.require("val")?),
        test: split_list(kv.require("test")?),
    };
    Ok((spec, splits))
}

/// Counts written by [`emit_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub frames_written: usize,
    pub splits: Splits,
}

/// One simulated sequence: RAD frames and ground-truth poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub motion: Motion,
    pub frames: Vec<RadTensor>,
    pub poses: Vec<Pose>,
}

/// Simulates sequence `index` of `spec` in memory.
pub fn simulate_sequence(spec: &SynthSpec, index: usize) -> Result<Sequence> {
    spec.radar.validate()?;
    if spec.motions.is_empty() {
        return Err(Error::Usage("no motions given".into()));
    }
    let motion = spec.motions[index % spec.motions.len()];
    let seq_seed = derive_seed(spec.seed, index as u64);
    let scene = Scene::generate(seq_seed, motion, &spec.clutter);
    let dt = 1.0 / spec.radar.frame_rate_hz;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut poses = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let t = f as f64 * dt;
        let scatterers = scene.scatterers_at(t, &spec.radar);
        let noise_seed = derive_seed(seq_seed, f as u64);
        frames.push(render_rad(&scatterers, &spec.radar, noise_seed, spec.window)?);
        poses.push(scene.skeleton.pose_at(t));
    }
    Ok(Sequence {
        name: sequence_name(index),
        motion,
        frames,
        poses,
    })
}

/// Writes a dataset under `out_dir`; frames are stored as `f32`.
pub fn emit_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetSummary> {
    let splits = split_sequences(spec)?;
    let frames_dir = out_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut csv = String::from(POSES_HEADER);
    csv.push('\n');
    let mut written = 0;
    for i in 0..spec.sequences {
        let seq = simulate_sequence(spec, i)?;
        for (f, (frame, pose)) in seq.frames.iter().zip(&seq.poses).enumerate() {
            write_rdt(&frames_dir.join(format!("{}_{f:04}.rdt", seq.name)), frame)?;
            for (j, p) in pose.joints.iter().enumerate() {
                csv.push_str(&format!("{},{f},{j},{},{},{}\n", seq.name, p[0], p[1], p[2]));
            }
            written += 1;
        }
    }
    let poses_path = out_dir.join("poses.csv");
    fs::write(&poses_path, csv).map_err(|e| Error::io(&poses_path, e))?;
    manifest(spec, &splits).write(&out_dir.join("manifest.txt"))?;
    Ok(DatasetSummary {
        frames_written: written,
        splits,
    })
}

/// A dataset read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: SynthSpec,
    pub splits: Splits,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KeyValues::read(&dir.join("manifest.txt"))?;
        let (spec, splits) = parse_manifest(&kv)?;
        let poses_path = dir.join("poses.csv");
        let text = fs::read_to_string(&poses_path).map_err(|e| Error::io(&poses_path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(POSES_HEADER) {
            return Err(Error::Data(format!("{}: unexpected header", poses_path.display())));
        }
        let mut poses = vec![vec![Pose::zeros(NUM_JOINTS); spec.frames]; spec.sequences];
        let mut seen = 0usize;
        for (n, line) in lines.enumerate() {
            let bad = || Error::Data(format!("{}: line {}: '{line}'", poses_path.display(), n + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad());
            }
            let s: usize = cols[0]
                .strip_prefix('s')
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)?;
            let f: usize = cols[1].parse().map_err(|_| bad())?;
            let j: usize = cols[2].parse().map_err(|_| bad())?;
            if s >= spec.sequences || f >= spec.frames || j >= NUM_JOINTS {
                return Err(bad());
            }
            for k in 0..3 {
                poses[s][f].joints[j][k] = cols[3 + k].parse().map_err(|_| bad())?;
            }
            seen += 1;
        }
        if seen != spec.sequences * spec.frames * NUM_JOINTS {
            return Err(Error::Data(format!(
                "{}: {seen} rows, expected {}",
                poses_path.display(),
                spec.sequences * spec.frames * NUM_JOINTS
            )));
        }
        let mut sequences = Vec::with_capacity(spec.sequences);
        for (i, seq_poses) in poses.into_iter().enumerate() {
            let name = sequence_name(i);
            let frames = (0..spec.frames)
                .map(|f| read_rdt(&dir.join("frames").join(format!("{name}_{f:04}.rdt"))))
                .collect::<Result<Vec<_>>>()?;
            sequences.push(Sequence {
                motion: spec.motions[i % spec.motions.len()],
                name,
                frames,
                poses: seq_poses,
            });
        }
        Ok(Self {
            spec,
            splits,
            sequences,
        })
    }

    /// Builds the dataset in memory exactly as [`emit_dataset`] followed by
    /// [`Dataset::load`] would (frames rounded to `f32`).
    pub fn simulate(spec: &SynthSpec) -> Result<Self> {
        let splits = split_sequences(spec)?;
        let sequences = (0..spec.sequences)
            .map(|i| {
                let mut seq = simulate_sequence(spec, i)?;
                for f in &mut seq.frames {
                    let (r, a, d) = f.dims();
                    let v = f.values().iter().map(|&x| x as f32 as f64).collect();
                    *f = RadTensor::new(r, a, d, v)?;
                }
                Ok(seq)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            splits,
            sequences,
        })
    }

    /// Sequences in `split`, in name order.
    pub fn split(&self, split: &str) -> Result<Vec<&Sequence>> {
        self.splits
            .get(split)?
            .iter()
            .map(|name| {
                self.sequences
                    .iter()
                    .find(|s| &s.name == name)
                    .ok_or_else(|| Error::Data(format!("split lists unknown sequence '{name}'")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            seed: 11,
            sequences: 2,
            frames: 4,
            radar: RadarConfig {
                range_bins: 16,
                angle_bins: 16,
                chirps_per_frame: 8,
                fast_samples_per_chirp: 32,
                virtual_elements: 8,
                ..RadarConfig::default()
            },
            ..SynthSpec::default()
        }
    }

    fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for sub in ["", "frames"] {
            let d = dir.join(sub);
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn emits_expected_files_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let summary = emit_dataset(&spec, dir.path()).unwrap();
        assert_eq!(summary.frames_written, 8);
        assert_eq!(fs::read_dir(dir.path().join("frames")).unwrap().count(), 8);
        let csv = fs::read_to_string(dir.path().join("poses.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 8 * NUM_JOINTS);
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.spec, spec);
        assert_eq!(ds.splits, summary.splits);
        let sim = simulate_sequence(&spec, 1).unwrap();
        assert_eq!(ds.sequences[1].poses, sim.poses);
        for (a, b) in ds.sequences[1].frames.iter().zip(&sim.frames) {
            let rounded: Vec<f64> = b.values().iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(a.values(), &rounded[..]);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_dataset(&small(), a.path()).unwrap();
        emit_dataset(&small(), b.path()).unwrap();
        assert_eq!(tree(a.path()), tree(b.path()));
    }

    #[test]
    fn splits_are_disjoint_and_cover_all_sequences() {
        let spec = SynthSpec {
            sequences: 7,
            ..SynthSpec::default()
        };
        let s = split_sequences(&spec).unwrap();
        let mut all: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 7);
        assert!(!s.val.is_empty() && !s.test.is_empty() && !s.train.is_empty());
    }

    #[test]
    fn frames_are_local_to_their_time() {
        let spec = small();
        let seq = simulate_sequence(&spec, 0).unwrap();
        let longer = simulate_sequence(&SynthSpec { frames: 6, ..spec.clone() }, 0).unwrap();
        assert_eq!(&longer.frames[..4], &seq.frames[..]);
    }
}
