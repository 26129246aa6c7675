//! Supervised training: per-frame joint loss, optional gate supervision,
//! Adam with decoupled weight decay, global-norm clipping and early stopping
//! on validation MPJPE.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::SpatialMap;
use crate::io::KeyValues;
use crate::metrics::{body_cells, evaluate, motion_proxy, GateSequence, MetricReport};
use crate::model::{prepare_window, ModelConfig, PulseModel, WindowFeatures};
use crate::pose::{Pose, PoseSequence};
use crate::radarsim::{Dataset, Sequence, JOINT_NAMES};
use crate::tensorcore::{adam_step, clip_global_norm, derive_seed, global_norm, AdamConfig, Graph, Tensor, Var};

const INIT_STREAM: u64 = 0x1;
const SHUFFLE_STREAM: u64 = 0x2;
const DROPOUT_STREAM: u64 = 0x3;

/// Smallest per-coordinate pose scale, mm.
const MIN_POSE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Global-norm clip threshold; `0` disables clipping.
    pub clip: f64,
    pub seed: u64,
    /// Weight `γ` of the auxiliary gate loss.
    pub gamma: f64,
    /// Epochs without a new best validation MPJPE before stopping.
    pub patience: usize,
    /// Write wall-clock seconds into the log (off keeps logs reproducible).
    pub log_time: bool,
}

impl Default for TrainConfig {
    /// Full-scale profile.
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            batch: 8,
            epochs: 100,
            clip: 1.0,
            seed: 0,
            gamma: 0.0,
            patience: 10,
            log_time: false,
        }
    }
}

impl TrainConfig {
    /// Desk-scale profile: a few hundred steps on a small synthetic set.
    pub fn desk() -> Self {
        Self {
            lr: 1e-3,
            batch: 4,
            epochs: 6,
            patience: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.patience == 0 || self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch, epochs and patience must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || self.clip < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("weight_decay, clip and gamma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lr", self.lr);
        kv.set("weight_decay", self.weight_decay);
        kv.set("batch", self.batch);
        kv.set("epochs", self.epochs);
        kv.set("clip", self.clip);
        kv.set("seed", self.seed);
        kv.set("gamma", self.gamma);
        kv.set("patience", self.patience);
        kv.set("log_time", self.log_time);
        kv
    }

    pub fn from_key_values(kv: &KeyValues, base: &TrainConfig) -> Result<Self> {
        let cfg = Self {
            lr: kv.parse_or("lr", base.lr)?,
            weight_decay: kv.parse_or("weight_decay", base.weight_decay)?,
            batch: kv.parse_or("batch", base.batch)?,
            epochs: kv.parse_or("epochs", base.epochs)?,
            clip: kv.parse_or("clip", base.clip)?,
            seed: kv.parse_or("seed", base.seed)?,
            gamma: kv.parse_or("gamma", base.gamma)?,
            patience: kv.parse_or("patience", base.patience)?,
            log_time: kv.get("log_time").map_or(Ok(base.log_time), crate::io::parse_flag)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_mpjpe: f64,
    pub val_mpjve: f64,
    pub val_akv: f64,
    /// Mean pre-clip gradient norm over the epoch's steps.
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,loss,val_mpjpe,val_mpjve,val_akv,grad_norm,seconds";

impl TrainLog {
    pub fn push(&mut self, r: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.epoch <= last.epoch {
                return Err(Error::Numeric(format!("epoch {} logged after {}", r.epoch, last.epoch)));
            }
        }
        for v in [r.loss, r.val_mpjpe, r.grad_norm] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite log entry at epoch {}", r.epoch)));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .min_by(|a, b| a.val_mpjpe.total_cmp(&b.val_mpjpe).then(a.epoch.cmp(&b.epoch)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRAIN_LOG_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.epoch, r.loss, r.val_mpjpe, r.val_mpjve, r.val_akv, r.grad_norm, r.seconds
            );
        }
        s
    }
}

/// Mean per-joint Euclidean distance, `(1/J)·Σ_j ‖p̂_j − p_j‖`.
pub fn loss_pos(pred: &Pose, gt: &Pose) -> Result<f64> {
    crate::metrics::pose_error(pred, gt)
}

/// Squared error between frame gate scores and their motion targets,
/// averaged over frames.
pub fn loss_gate(g_bar: &[f64], target: &[f64]) -> Result<f64> {
    if g_bar.len() != target.len() || g_bar.is_empty() {
        return Err(Error::shape("loss_gate", &[g_bar.len()], &[target.len()]));
    }
    Ok(g_bar.iter().zip(target).map(|(g, t)| (g - t).powi(2)).sum::<f64>() / g_bar.len() as f64)
}

/// Min-max normalization to `[0, 1]`; a constant input maps to zeros.
pub fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// One training or evaluation window.
#[derive(Debug, Clone)]
pub struct Sample {
    pub seq: String,
    pub frame: usize,
    pub input: WindowFeatures,
    /// `3J` values, mm.
    pub target: Vec<f64>,
    /// Min-max normalized motion proxy of this frame's sequence.
    pub gate_target: f64,
    /// Body-occupied cells of this frame's spatial map.
    pub body: Vec<bool>,
}

/// Windows ending at every frame `t ≥ K−1` of `seq`; windows never cross
/// sequence boundaries.
pub fn sequence_samples(seq: &Sequence, cfg: &ModelConfig) -> Result<Vec<Sample>> {
    let k = cfg.frames;
    if seq.frames.len() < k.max(2) {
        return Err(Error::Data(format!(
            "sequence {} has {} frames, need at least {}",
            seq.name,
            seq.frames.len(),
            k.max(2)
        )));
    }
    let gt = PoseSequence::new(seq.poses.clone(), 1.0);
    let motion = min_max(&motion_proxy(&gt)?);
    (k - 1..seq.frames.len())
        .map(|t| {
            let input = prepare_window(&seq.frames[t + 1 - k..=t], cfg)?;
            let body = body_cells(&input.spatial);
            Ok(Sample {
                seq: seq.name.clone(),
                frame: t,
                target: seq.poses[t].flat(),
                gate_target: motion[t.min(motion.len() - 1)],
                body,
                input,
            })
        })
        .collect()
}

/// Per-coordinate mean and std (clamped below) of the targets.
pub fn pose_stats(samples: &[Sample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Data("no samples for pose statistics".into()));
    }
    let dim = samples[0].target.len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.target) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((q, v), m) in var.iter_mut().zip(&s.target).zip(&mean) {
            *q += (v - m).powi(2) / n as f64;
        }
    }
    Ok((mean, var.into_iter().map(|v| v.sqrt().max(MIN_POSE_SCALE)).collect()))
}

/// Records `L_pos + γ·L_gate` for one sample and returns `(loss, L_pos)`.
fn sample_loss(
    g: &mut Graph,
    model: &PulseModel,
    sample: &Sample,
    gamma: f64,
    train: bool,
) -> Result<(Var, Var)> {
    let j = model.cfg.joints;
    let built = model.build(g, &model.params, &sample.input, train, false)?;
    let pose = g.reshape(built.pose, &[j, 3])?;
    let target = g.constant(Tensor::new(&[j, 3], sample.target.clone())?);
    let diff = g.sub(pose, target)?;
    let norms = g.row_norm(diff);
    let l_pos = g.mean(norms);
    let loss = match built.gates {
        Some(gates) if gamma > 0.0 => {
            let n = sample.body.iter().filter(|&&b| b).count();
            let weights: Vec<f64> = if n == 0 {
                vec![1.0 / sample.body.len() as f64; sample.body.len()]
            } else {
                sample.body.iter().map(|&b| if b { 1.0 / n as f64 } else { 0.0 }).collect()
            };
            let w = g.constant(Tensor::new(&[1, weights.len()], weights)?);
            let g_bar = g.matmul(w, gates)?;
            let d = g.add_scalar(g_bar, -sample.gate_target);
            let sq = g.mul(d, d)?;
            let l_gate = g.sum(sq);
            let weighted = g.scale(l_gate, gamma);
            g.add(l_pos, weighted)?
        }
        _ => l_pos,
    };
    Ok((loss, l_pos))
}

/// Mean loss and mean gradients over `batch` (indices into `samples`).
/// Per-sample graphs may run in parallel; the reduction order is fixed.
pub fn batch_gradients(
    model: &PulseModel,
    samples: &[Sample],
    batch: &[usize],
    gamma: f64,
    train: bool,
    seed: u64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let per: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .enumerate()
        .map(|(pos, &i)| {
            let mut g = Graph::new(derive_seed(seed, pos as u64));
            let (loss, _) = sample_loss(&mut g, model, &samples[i], gamma, train)?;
            let grads = g.backward(loss)?;
            Ok((g.value(loss).data()[0], g.param_grads(&model.params, &grads)))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut acc: Vec<Vec<f64>> = per[0].1.iter().map(|v| vec![0.0; v.len()]).collect();
    for (loss, grads) in &per {
        total += loss * scale;
        for (a, g) in acc.iter_mut().zip(grads) {
            for (x, y) in a.iter_mut().zip(g) {
                *x += y * scale;
            }
        }
    }
    Ok((total, acc))
}

/// Clips (when enabled) and applies one Adam step; returns the pre-clip norm.
pub fn optimizer_step(model: &mut PulseModel, mut grads: Vec<Vec<f64>>, cfg: &TrainConfig) -> Result<f64> {
    let norm = if cfg.clip > 0.0 {
        clip_global_norm(&mut grads, cfg.clip)?
    } else {
        global_norm(&grads)
    };
    adam_step(&mut model.params, &grads, &cfg.adam())?;
    Ok(norm)
}

/// Frame-wise predictions for one sequence, with the inputs used by the
/// gate diagnostics.
#[derive(Debug, Clone)]
pub struct SequencePrediction {
    pub name: String,
    pub pred: PoseSequence,
    pub gt: PoseSequence,
    pub gates: Vec<Option<Vec<f64>>>,
    pub spatial: Vec<SpatialMap>,
}

impl SequencePrediction {
    /// Inputs for [`crate::metrics::gate_motion_diag`]; fails for variants
    /// without gates.
    pub fn gate_sequence(&self) -> Result<GateSequence> {
        let gates = self
            .gates
            .iter()
            .cloned()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Config(format!("sequence {}: the model variant has no gates", self.name)))?;
        Ok(GateSequence {
            name: self.name.clone(),
            gates,
            spatial: self.spatial.clone(),
            pred: self.pred.clone(),
            gt: self.gt.clone(),
        })
    }
}

/// Eval-mode predictions for every window of `seq`.
pub fn predict_sequence(model: &PulseModel, seq: &Sequence, frame_rate: f64) -> Result<SequencePrediction> {
    let samples = sequence_samples(seq, &model.cfg)?;
    let outs = samples
        .par_iter()
        .map(|s| model.forward_features(&s.input, false, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut pred = Vec::with_capacity(outs.len());
    let mut gates = Vec::with_capacity(outs.len());
    for o in outs {
        pred.push(o.pose);
        gates.push(o.gates);
    }
    Ok(SequencePrediction {
        name: seq.name.clone(),
        pred: PoseSequence::new(pred, frame_rate),
        gt: PoseSequence::new(samples.iter().map(|s| seq.poses[s.frame].clone()).collect(), frame_rate),
        gates,
        spatial: samples.into_iter().map(|s| s.input.spatial).collect(),
    })
}

/// Pooled metrics of `model` on the sequences of `split`.
pub fn evaluate_split(model: &PulseModel, data: &Dataset, split: &str) -> Result<(MetricReport, Vec<SequencePrediction>)> {
    let seqs = data.split(split)?;
    if seqs.is_empty() {
        return Err(Error::Data(format!("split '{split}' is empty")));
    }
    let preds = seqs
        .iter()
        .map(|s| predict_sequence(model, s, data.spec.radar.frame_rate_hz))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = preds.iter().map(|p| (p.pred.clone(), p.gt.clone())).collect();
    let names = &JOINT_NAMES[..model.cfg.joints.min(JOINT_NAMES.len())];
    Ok((evaluate(&pairs, names, true)?, preds))
}

/// Checks that `cfg` fits the dataset grid and skeleton.
pub fn check_compatible(cfg: &ModelConfig, data: &Dataset) -> Result<()> {
    let r = &data.spec.radar;
    let want = (r.range_bins, r.angle_bins, r.doppler_bins());
    let have = (cfg.range_bins, cfg.angle_bins, cfg.doppler_bins);
    if want != have {
        return Err(Error::Config(format!(
            "model grid R,A,D={have:?} does not match dataset grid {want:?}"
        )));
    }
    if cfg.joints != JOINT_NAMES.len() {
        return Err(Error::Config(format!(
            "model predicts {} joints, dataset has {}",
            cfg.joints,
            JOINT_NAMES.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MPJPE.
    pub model: PulseModel,
    pub log: TrainLog,
    pub best_epoch: usize,
}

/// Trains on the `train` split, selecting by `val` MPJPE.
pub fn train(data: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    check_compatible(model_cfg, data)?;
    let train_seqs = data.split("train")?;
    if train_seqs.is_empty() || data.splits.val.is_empty() {
        return Err(Error::Data("training needs non-empty train and val splits".into()));
    }
    let mut samples = Vec::new();
    for s in &train_seqs {
        samples.extend(sequence_samples(s, model_cfg)?);
    }
    let (mean, scale) = pose_stats(&samples)?;
    let mut model = PulseModel::new(model_cfg.clone(), derive_seed(cfg.seed, INIT_STREAM))?
        .with_pose_stats(mean, scale)?;

    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, PulseModel)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64));
        order.shuffle(&mut rng);
        let (mut loss_sum, mut norm_sum, mut steps) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let seed = derive_seed(derive_seed(cfg.seed, DROPOUT_STREAM), step);
            let (loss, grads) = batch_gradients(&model, &samples, batch, cfg.gamma, true, seed)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss or gradient at epoch {epoch}, batch {b}")));
            }
            norm_sum += optimizer_step(&mut model, grads, cfg)?;
            if !model.params.all_finite() {
                return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}, batch {b}")));
            }
            loss_sum += loss;
            steps += 1;
            step += 1;
        }
        let (report, _) = evaluate_split(&model, data, "val")?;
        log.push(EpochRecord {
            epoch,
            loss: loss_sum / steps as f64,
            val_mpjpe: report.mpjpe,
            val_mpjve: report.mpjve,
            val_akv: report.akv,
            grad_norm: norm_sum / steps as f64,
            seconds: if cfg.log_time { start.elapsed().as_secs_f64() } else { 0.0 },
        })?;
        if best.as_ref().is_none_or(|(b, _, _)| report.mpjpe < *b) {
            best = Some((report.mpjpe, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, log, best_epoch })
}

#[cfg(test)]
mod tests;
