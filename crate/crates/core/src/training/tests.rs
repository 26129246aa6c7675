use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::Ablation;
use crate::radarsim::{RadarConfig, SynthSpec};

pub(crate) fn tiny_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        sequences: 3,
        frames: 8,
        radar: RadarConfig {
            bandwidth_hz: 0.25e9,
            chirps_per_frame: 4,
            fast_samples_per_chirp: 16,
            virtual_elements: 8,
            range_bins: 8,
            angle_bins: 8,
            ..RadarConfig::default()
        },
        ..SynthSpec::default()
    }
}

pub(crate) fn tiny_model(ablation: Ablation) -> ModelConfig {
    ModelConfig {
        range_bins: 8,
        angle_bins: 8,
        doppler_bins: 4,
        patch_r: 2,
        patch_a: 2,
        embed_dim: 8,
        layers: 1,
        heads: 2,
        head_hidden: 16,
        ablation,
        ..ModelConfig::default()
    }
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch: 4,
        lr: 1e-3,
        patience: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_pos_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt = Pose::new((0..4).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect());
    assert_eq!(loss_pos(&gt, &gt).unwrap(), 0.0);
    assert!((loss_pos(&gt.translated([3.0, 4.0, 0.0]), &gt).unwrap() - 5.0).abs() < 1e-12);
    let pred = Pose::new((0..4).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect());
    let mut oracle = 0.0;
    for j in 0..4 {
        let d: f64 = (0..3).map(|a| (pred.joints[j][a] - gt.joints[j][a]).powi(2)).sum();
        oracle += d.sqrt() / 4.0;
    }
    assert!((loss_pos(&pred, &gt).unwrap() - oracle).abs() < 1e-12);
    assert!(loss_pos(&Pose::zeros(3), &gt).is_err());
}

#[test]
fn loss_gate_examples() {
    let v = [2.0, 5.0, 3.5];
    let norm = min_max(&v);
    assert_eq!(norm, vec![0.0, 1.0, 0.5]);
    assert_eq!(loss_gate(&norm, &norm).unwrap(), 0.0);
    assert_eq!(loss_gate(&[0.5], &[0.0]).unwrap(), 0.25);
    let g = [0.1, 0.9, 0.5];
    assert!((loss_gate(&g, &norm).unwrap() - 0.02 / 3.0).abs() < 1e-12);
    assert_eq!(min_max(&[4.0, 4.0]), vec![0.0, 0.0]);
    assert!(loss_gate(&g, &norm[..2]).is_err());
}

#[test]
fn config_validation_and_round_trip() {
    assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
    let cfg = TrainConfig {
        gamma: 0.1,
        seed: 9,
        ..TrainConfig::desk()
    };
    assert_eq!(TrainConfig::from_key_values(&cfg.to_key_values(), &TrainConfig::default()).unwrap(), cfg);
}

#[test]
fn windows_stay_inside_sequences() {
    let data = Dataset::simulate(&tiny_spec(1)).unwrap();
    let cfg = ModelConfig {
        frames: 3,
        ..tiny_model(Ablation::Full)
    };
    let seq = &data.sequences[0];
    let samples = sequence_samples(seq, &cfg).unwrap();
    assert_eq!(samples.len(), 6);
    assert_eq!(samples[0].frame, 2);
    assert_eq!(samples[0].input.doppler.len(), 3);
    assert_eq!(samples[0].target, seq.poses[2].flat());
    let t = samples.iter().map(|s| s.gate_target);
    assert!(t.clone().all(|v| (0.0..=1.0).contains(&v)));
    assert!(t.clone().any(|v| v == 0.0) && t.clone().any(|v| v == 1.0));
}

#[test]
fn one_step_equals_manual_adam() {
    let data = Dataset::simulate(&tiny_spec(2)).unwrap();
    let cfg = tiny_model(Ablation::Full);
    let samples = sequence_samples(data.split("train").unwrap()[0], &cfg).unwrap();
    let model = PulseModel::new(cfg, 3).unwrap();
    let tc = TrainConfig {
        clip: 0.0,
        ..tiny_train(1)
    };
    let batch = [0, 1, 2, 3];
    let (_, grads) = batch_gradients(&model, &samples, &batch, 0.0, false, 0).unwrap();

    // Manual mean of independently built per-sample gradients.
    let mut manual = model.params.clone();
    let mut mean: Vec<Vec<f64>> = grads.iter().map(|g| vec![0.0; g.len()]).collect();
    for &i in &batch {
        let mut g = Graph::new(0);
        let (loss, _) = sample_loss(&mut g, &model, &samples[i], 0.0, false).unwrap();
        let gr = g.backward(loss).unwrap();
        for (m, x) in mean.iter_mut().zip(g.param_grads(&model.params, &gr)) {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b / 4.0;
            }
        }
    }
    adam_step(&mut manual, &mean, &tc.adam()).unwrap();
    let mut stepped = model.clone();
    optimizer_step(&mut stepped, grads, &tc).unwrap();
    for i in 0..manual.len() {
        for (a, b) in manual.tensor(i).data().iter().zip(stepped.params.tensor(i).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_gamma_leaves_gradients_unchanged() {
    let data = Dataset::simulate(&tiny_spec(3)).unwrap();
    let cfg = tiny_model(Ablation::Full);
    let samples = sequence_samples(data.split("train").unwrap()[0], &cfg).unwrap();
    let model = PulseModel::new(cfg, 4).unwrap();
    let (la, ga) = batch_gradients(&model, &samples, &[0, 1], 0.0, false, 0).unwrap();
    let mut g = Graph::new(0);
    let (loss, l_pos) = sample_loss(&mut g, &model, &samples[0], 0.0, false).unwrap();
    assert_eq!(loss, l_pos);
    let (lb, gb) = batch_gradients(&model, &samples, &[0, 1], 0.5, false, 0).unwrap();
    assert!(lb > la);
    assert_ne!(ga, gb);
    let (lc, gc) = batch_gradients(&model, &samples, &[0, 1], 0.0, false, 0).unwrap();
    assert_eq!((la, ga), (lc, gc));
}

#[test]
fn training_runs_is_deterministic_and_keeps_the_best_epoch() {
    let data = Dataset::simulate(&tiny_spec(4)).unwrap();
    let cfg = tiny_model(Ablation::Full);
    let tc = tiny_train(3);
    let a = train(&data, &cfg, &tc).unwrap();
    let b = train(&data, &cfg, &tc).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.records.len(), 3);
    let best = a.log.best().unwrap();
    assert_eq!(best.epoch, a.best_epoch);
    assert!(a.log.records.iter().all(|r| r.val_mpjpe >= best.val_mpjpe));
    let (report, _) = evaluate_split(&a.model, &data, "val").unwrap();
    assert_eq!(report.mpjpe, best.val_mpjpe);
    assert!(a.log.to_csv().starts_with(TRAIN_LOG_HEADER));
}

#[test]
fn training_rejects_mismatched_grid() {
    let data = Dataset::simulate(&tiny_spec(5)).unwrap();
    let cfg = ModelConfig {
        doppler_bins: 8,
        ..tiny_model(Ablation::Full)
    };
    assert!(matches!(train(&data, &cfg, &tiny_train(1)), Err(Error::Config(_))));
}

#[test]
fn loss_decreases_over_training() {
    let data = Dataset::simulate(&tiny_spec(6)).unwrap();
    let cfg = ModelConfig {
        dropout: 0.0,
        ..tiny_model(Ablation::Full)
    };
    let tc = TrainConfig {
        lr: 3e-3,
        batch: 2,
        ..tiny_train(50)
    };
    let out = train(&data, &cfg, &tc).unwrap();
    let first = out.log.records.first().unwrap().loss;
    let last = out.log.records.last().unwrap().loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn early_stopping_respects_patience() {
    let data = Dataset::simulate(&tiny_spec(7)).unwrap();
    let tc = TrainConfig {
        lr: 0.5,
        patience: 1,
        ..tiny_train(20)
    };
    let out = train(&data, &tiny_model(Ablation::SpatialOnly), &tc).unwrap();
    let recs = &out.log.records;
    if recs.len() < 20 {
        let last = recs.last().unwrap();
        assert!(last.val_mpjpe >= out.log.best().unwrap().val_mpjpe);
        assert_eq!(recs.len(), out.best_epoch + 1);
    }
}
