//! The subcommands, callable without going through argument parsing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::RadTensor;
use crate::metrics::{
    gate_bins_csv, gate_motion_diag, gate_summary_csv, write_gate_diag_csv, write_metrics_csv, write_per_joint_csv,
    GateAggregation, GateDiag, MetricReport,
};
use crate::model::{prepare_window, Ablation, ModelConfig, PulseModel};
use crate::radarsim::dataset::DatasetSummary;
use crate::radarsim::{emit_dataset, Dataset};
use crate::tensorcore::{grad_check_with, GradCheckEntry, GradCheckOptions, Tensor};
use crate::training::{evaluate_split, train, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const ABLATION_HEADER: &str = "variant,mpjpe,pa_mpjpe,mpjve,akv";
pub const GRADCHECK_HEADER: &str = "group,param,entries,max_abs_grad,max_rel_err,kink_skipped";
/// Threshold every parameter group must stay under.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a synthetic dataset to `out`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<DatasetSummary> {
    create_dir(out)?;
    let summary = emit_dataset(&cfg.synth, out)?;
    cfg.write(out)?;
    Ok(summary)
}

/// Trains on `dataset`, writing the best checkpoint and the epoch log.
pub fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<TrainOutcome> {
    let data = Dataset::load(dataset)?;
    let outcome = train(&data, &cfg.model, &cfg.train)?;
    create_dir(out)?;
    Checkpoint {
        model: outcome.model.clone(),
        seed: cfg.train.seed,
    }
    .save(&out.join(CHECKPOINT_FILE))?;
    write_text(&out.join(TRAIN_LOG_FILE), &outcome.log.to_csv())?;
    cfg.write(out)?;
    Ok(outcome)
}

/// Run settings recorded next to outputs derived from a checkpoint.
fn checkpoint_run_config(cfg: &RunConfig, ckpt: &Checkpoint, data: &Dataset) -> RunConfig {
    let mut resolved = cfg.clone();
    resolved.model = ckpt.model.cfg.clone();
    resolved.synth = data.spec.clone();
    resolved.train.seed = ckpt.seed;
    resolved
}

/// Metrics of a checkpoint on one split: `metrics.csv` and `per_joint.csv`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, dataset: &Path, split: &str, out: &Path) -> Result<MetricReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let data = Dataset::load(dataset)?;
    crate::training::check_compatible(&ckpt.model.cfg, &data)?;
    let (report, _) = evaluate_split(&ckpt.model, &data, split)?;
    create_dir(out)?;
    write_metrics_csv(&out.join("metrics.csv"), &report)?;
    write_per_joint_csv(&out.join("per_joint.csv"), &report.per_joint)?;
    checkpoint_run_config(cfg, &ckpt, &data).write(out)?;
    Ok(report)
}

/// Sweep axis of [`cmd_ablate`], applied to the `full` variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    None,
    Beta,
    Window,
    Patch,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Sweep::None),
            "beta" => Ok(Sweep::Beta),
            "window" => Ok(Sweep::Window),
            "patch" => Ok(Sweep::Patch),
            other => Err(Error::Usage(format!("unknown sweep '{other}' (none|beta|window|patch)"))),
        }
    }
}

pub const BETA_SWEEP: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];
pub const WINDOW_SWEEP: [usize; 4] = [2, 3, 5, 7];
pub const PATCH_SWEEP: [usize; 4] = [2, 4, 6, 8];

/// Labelled model configs an ablation run trains, in row order. Sweep
/// values that do not fit the grid are returned separately.
pub fn ablation_plan(base: &ModelConfig, variants: &[Ablation], sweep: Sweep) -> (Vec<(String, ModelConfig)>, Vec<String>) {
    let mut plan: Vec<(String, ModelConfig)> = variants
        .iter()
        .map(|&v| {
            let cfg = ModelConfig {
                ablation: v,
                ..base.clone()
            };
            (v.to_string(), cfg)
        })
        .collect();
    let full = ModelConfig {
        ablation: Ablation::Full,
        ..base.clone()
    };
    let swept: Vec<(String, ModelConfig)> = match sweep {
        Sweep::None => Vec::new(),
        Sweep::Beta => BETA_SWEEP
            .iter()
            .map(|&b| (format!("beta={b}"), ModelConfig { beta: b, ..full.clone() }))
            .collect(),
        Sweep::Window => WINDOW_SWEEP
            .iter()
            .map(|&w| (format!("window={w}"), ModelConfig { window: w, ..full.clone() }))
            .collect(),
        Sweep::Patch => PATCH_SWEEP
            .iter()
            .map(|&p| {
                let cfg = ModelConfig {
                    patch_r: p,
                    patch_a: p,
                    ..full.clone()
                };
                (format!("patch={p}"), cfg)
            })
            .collect(),
    };
    let mut skipped = Vec::new();
    for (label, cfg) in swept {
        match cfg.validate() {
            Ok(()) => plan.push((label, cfg)),
            Err(e) => skipped.push(format!("{label}: {e}")),
        }
    }
    (plan, skipped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub report: MetricReport,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(s, "{},{},{},{},{}", r.variant, m.mpjpe, m.pa_mpjpe, m.mpjve, m.akv);
    }
    s
}

/// Trains every planned variant with the same seed and reports test-split
/// metrics in `ablation.csv`. Returns the rows and the skipped sweep values.
pub fn cmd_ablate(
    cfg: &RunConfig,
    dataset: &Path,
    variants: &[Ablation],
    sweep: Sweep,
    out: &Path,
) -> Result<(Vec<AblationRow>, Vec<String>)> {
    let data = Dataset::load(dataset)?;
    let (plan, skipped) = ablation_plan(&cfg.model, variants, sweep);
    if plan.is_empty() {
        return Err(Error::Usage("nothing to ablate: no variants and no valid sweep values".into()));
    }
    let mut rows = Vec::with_capacity(plan.len());
    for (label, model_cfg) in plan {
        let outcome = train(&data, &model_cfg, &cfg.train)?;
        let (report, _) = evaluate_split(&outcome.model, &data, "test")?;
        rows.push(AblationRow { variant: label, report });
    }
    create_dir(out)?;
    write_text(&out.join("ablation.csv"), &ablation_csv(&rows))?;
    cfg.write(out)?;
    Ok((rows, skipped))
}

/// Parameter group of a tensor name, as reported by [`cmd_gradcheck`].
pub fn param_group(name: &str) -> &'static str {
    match name.split('.').next().unwrap_or("") {
        "spatial" | "doppler" => "tokenizers",
        "gate" => "gate",
        "cross" => "attention",
        "lambda" => "f_lambda",
        "concat" => "concat",
        "head" => "head",
        b if b.starts_with("block") => "transformer",
        _ => "other",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub group: &'static str,
    pub entry: GradCheckEntry,
}

/// Worst relative error per group, in first-appearance order.
pub fn group_max(rows: &[GradCheckRow]) -> Vec<(&'static str, f64)> {
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(g, _)| *g == r.group) {
            Some(slot) => slot.1 = slot.1.max(r.entry.max_rel_err),
            None => out.push((r.group, r.entry.max_rel_err)),
        }
    }
    out
}

pub fn gradcheck_csv(rows: &[GradCheckRow]) -> String {
    let mut s = format!("{GRADCHECK_HEADER}\n");
    for r in rows {
        let e = &r.entry;
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e},{}",
            r.group, e.name, e.entries, e.max_abs_grad, e.max_rel_err, e.kink_skipped
        );
    }
    s
}

/// Finite-difference check of every parameter of the model in `cfg` on a
/// random frame window and target, with all parameters perturbed away from
/// their initialization so zero-initialized blocks carry gradient.
pub fn gradient_check(cfg: &ModelConfig, seed: u64) -> Result<Vec<GradCheckRow>> {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..cfg.clone()
    };
    let mut model = PulseModel::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6164);
    for i in 0..model.params.len() {
        for v in model.params.data_mut(i) {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let cells = cfg.range_bins * cfg.angle_bins * cfg.doppler_bins;
    let window = (0..cfg.frames)
        .map(|_| {
            let values = (0..cells).map(|_| rng.gen_range(0.0..1.0)).collect();
            RadTensor::new(cfg.range_bins, cfg.angle_bins, cfg.doppler_bins, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let input = prepare_window(&window, &cfg)?;
    let j = cfg.joints;
    let target = Tensor::new(&[j, 3], (0..3 * j).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let entries = grad_check_with(
        |g, p| {
            let built = model.build(g, p, &input, false, false)?;
            let pose = g.reshape(built.pose, &[j, 3])?;
            let t = g.constant(target.clone());
            let diff = g.sub(pose, t)?;
            let n = g.row_norm(diff);
            Ok(g.mean(n))
        },
        &model.params,
        GradCheckOptions {
            step: 1e-3,
            richardson: true,
        },
    )?;
    Ok(entries
        .into_iter()
        .map(|entry| GradCheckRow {
            group: param_group(&entry.name),
            entry,
        })
        .collect())
}

/// Runs [`gradient_check`] on the configured model and writes
/// `gradcheck.csv` when `out` is given.
pub fn cmd_gradcheck(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<GradCheckRow>> {
    let rows = gradient_check(&cfg.model, cfg.train.seed)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_text(&dir.join("gradcheck.csv"), &gradcheck_csv(&rows))?;
        cfg.write(dir)?;
    }
    Ok(rows)
}

/// Numeric error naming every group at or above [`GRADCHECK_TOLERANCE`].
pub fn gradcheck_verdict(rows: &[GradCheckRow]) -> Result<()> {
    let failed: Vec<String> = group_max(rows)
        .into_iter()
        .filter(|(_, e)| !(*e < GRADCHECK_TOLERANCE))
        .map(|(g, e)| format!("{g} ({e:e})"))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e}: {}",
            failed.join(", ")
        )))
    }
}

/// Gate–motion diagnostics of a checkpoint on one split:
/// `gate_diag.csv`, `gate_summary.csv` and `gate_bins.csv`.
pub fn cmd_diag(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: &str,
    agg: GateAggregation,
    bins: usize,
    out: &Path,
) -> Result<GateDiag> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let data = Dataset::load(dataset)?;
    crate::training::check_compatible(&ckpt.model.cfg, &data)?;
    let (_, preds) = evaluate_split(&ckpt.model, &data, split)?;
    let seqs = preds.iter().map(|p| p.gate_sequence()).collect::<Result<Vec<_>>>()?;
    let diag = gate_motion_diag(&seqs, bins, agg)?;
    create_dir(out)?;
    write_gate_diag_csv(&out.join("gate_diag.csv"), &diag)?;
    write_text(&out.join("gate_summary.csv"), &gate_summary_csv(&diag, agg))?;
    write_text(&out.join("gate_bins.csv"), &gate_bins_csv(&diag))?;
    checkpoint_run_config(cfg, &ckpt, &data).write(out)?;
    Ok(diag)
}

