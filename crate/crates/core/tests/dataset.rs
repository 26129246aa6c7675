use pulse::io::read_rdt;
use pulse::radarsim::{emit_dataset, Dataset, Motion, RadarConfig, SynthSpec};

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        sequences: 5,
        frames: 6,
        motions: vec![Motion::Walk, Motion::Wave, Motion::Still, Motion::Jitter],
        radar: RadarConfig {
            bandwidth_hz: 0.25e9,
            fast_samples_per_chirp: 16,
            virtual_elements: 8,
            range_bins: 8,
            angle_bins: 8,
            chirps_per_frame: 4,
            ..RadarConfig::default()
        },
        ..SynthSpec::default()
    }
}

#[test]
fn in_memory_simulation_equals_emit_then_load() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(21);
    let summary = emit_dataset(&spec, dir.path()).unwrap();
    assert_eq!(summary.frames_written, 30);
    let loaded = Dataset::load(dir.path()).unwrap();
    let simulated = Dataset::simulate(&spec).unwrap();
    assert_eq!(loaded, simulated);
    let splits = &loaded.splits;
    assert_eq!(splits.train.len() + splits.val.len() + splits.test.len(), 5);
    assert!(!splits.val.is_empty() && !splits.test.is_empty());
}

#[test]
fn frames_have_the_configured_grid_and_differ_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    emit_dataset(&small_spec(1), dir.path()).unwrap();
    let frame = read_rdt(&dir.path().join("frames").join("s000_0000.rdt")).unwrap();
    assert_eq!(frame.dims(), (8, 8, 4));
    assert!(frame.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    let a = Dataset::simulate(&small_spec(1)).unwrap();
    let b = Dataset::simulate(&small_spec(2)).unwrap();
    assert_ne!(a.sequences[0].frames, b.sequences[0].frames);
}

#[test]
fn loading_a_missing_or_damaged_dataset_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Dataset::load(dir.path()).is_err());
    emit_dataset(&small_spec(3), dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("frames").join("s001_0002.rdt")).unwrap();
    assert!(Dataset::load(dir.path()).is_err());
}
