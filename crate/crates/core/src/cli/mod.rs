//! Command-line front end: `synth`, `train`, `eval`, `ablate`, `gradcheck`
//! and `diag`, plus the run-config and checkpoint formats they share.
//!
//! Every [`RunConfig`] key is also a `--key VALUE` flag on every command;
//! flags override `--config FILE`, which overrides the defaults.

pub mod checkpoint;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgMatches, Command};

pub use checkpoint::Checkpoint;
pub use commands::{
    ablation_csv, ablation_plan, cmd_ablate, cmd_diag, cmd_eval, cmd_gradcheck, cmd_synth, cmd_train,
    gradcheck_csv, gradcheck_verdict, gradient_check, group_max, param_group, AblationRow, GradCheckRow, Sweep, ABLATION_HEADER, CHECKPOINT_FILE,
    GRADCHECK_HEADER, GRADCHECK_TOLERANCE, TRAIN_LOG_FILE,
};
pub use config::{RunConfig, RESOLVED_CONFIG, SEED_ENV};

use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::metrics::GateAggregation;
use crate::model::Ablation;

fn path_arg(name: &'static str, help: &'static str, required: bool) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .required(required)
        .help(help)
}

fn text_arg(name: &'static str, default: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).default_value(default).help(help)
}

fn with_config_keys(cmd: Command) -> Command {
    let cmd = cmd.arg(path_arg("config", "key=value run configuration file", false));
    RunConfig::known_keys().into_iter().fold(cmd, |c, key| {
        c.arg(
            Arg::new(key.clone())
                .long(key)
                .value_name("VALUE")
                .help_heading("Run config keys"),
        )
    })
}

pub fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| with_config_keys(Command::new(name).about(about));
    Command::new("pulse")
        .about("Doppler-prompted mmWave pose estimation pipeline")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("synth", "Write a synthetic radar dataset").arg(path_arg("out", "dataset directory", true)))
        .subcommand(
            sub("train", "Train a model and write model.ckpt and train_log.csv")
                .arg(path_arg("dataset", "dataset directory", true))
                .arg(path_arg("out", "output directory", true)),
        )
        .subcommand(
            sub("eval", "Evaluate a checkpoint: metrics.csv and per_joint.csv")
                .arg(path_arg("checkpoint", "PULSECKP file", true))
                .arg(path_arg("dataset", "dataset directory", true))
                .arg(text_arg("split", "test", "train | val | test"))
                .arg(path_arg("out", "output directory", true)),
        )
        .subcommand(
            sub("ablate", "Train variants and sweeps, write ablation.csv")
                .arg(path_arg("dataset", "dataset directory", true))
                .arg(text_arg(
                    "variants",
                    "full,spatial_only,doppler_only,naive_concat,ungated,global_interaction",
                    "comma-separated model variants; empty for sweep only",
                ))
                .arg(text_arg("sweep", "none", "none | beta | window | patch, applied to full"))
                .arg(path_arg("out", "output directory", true)),
        )
        .subcommand(
            sub("gradcheck", "Finite-difference check of every parameter group")
                .arg(path_arg("out", "directory for gradcheck.csv", false)),
        )
        .subcommand(
            sub("diag", "Gate-motion diagnostics: gate_diag.csv, gate_summary.csv, gate_bins.csv")
                .arg(path_arg("checkpoint", "PULSECKP file", true))
                .arg(path_arg("dataset", "dataset directory", true))
                .arg(text_arg("split", "test", "train | val | test"))
                .arg(text_arg("aggregation", "body", "body | global"))
                .arg(text_arg("bins", "5", "equal-count gate bins"))
                .arg(path_arg("out", "output directory", true)),
        )
}

fn run_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut overrides = KeyValues::new();
    for key in RunConfig::known_keys() {
        if let Some(v) = m.get_one::<String>(&key) {
            overrides.set(&key, v);
        }
    }
    RunConfig::resolve(m.get_one::<PathBuf>("config").map(PathBuf::as_path), &overrides)
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> &'a std::path::Path {
    m.get_one::<PathBuf>(name).expect("required by clap")
}

fn text<'a>(m: &'a ArgMatches, name: &str) -> &'a str {
    m.get_one::<String>(name).expect("has a default")
}

fn parse_variants(raw: &str) -> Result<Vec<Ablation>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Runs one command line, printing summaries to stdout.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.to_string())),
    };
    let (name, m) = matches.subcommand().expect("subcommand_required");
    let cfg = run_config(m)?;
    match name {
        "synth" => {
            let s = cmd_synth(&cfg, path(m, "out"))?;
            let r = &cfg.synth.radar;
            println!(
                "wrote {} frames ({} sequences: {} train, {} val, {} test), grid {}x{}x{}, seed {}",
                s.frames_written,
                cfg.synth.sequences,
                s.splits.train.len(),
                s.splits.val.len(),
                s.splits.test.len(),
                r.range_bins,
                r.angle_bins,
                r.doppler_bins(),
                cfg.synth.seed
            );
        }
        "train" => {
            let out = cmd_train(&cfg, path(m, "dataset"), path(m, "out"))?;
            let best = out.log.best().expect("at least one epoch");
            println!(
                "trained {} epochs; best epoch {} val MPJPE {:.3} mm",
                out.log.records.len(),
                best.epoch,
                best.val_mpjpe
            );
        }
        "eval" => {
            let r = cmd_eval(&cfg, path(m, "checkpoint"), path(m, "dataset"), text(m, "split"), path(m, "out"))?;
            println!(
                "{} frames: MPJPE {:.3}  PA-MPJPE {:.3}  MPJVE {:.3}  AKV {:.3}",
                r.frames, r.mpjpe, r.pa_mpjpe, r.mpjve, r.akv
            );
        }
        "ablate" => {
            let variants = parse_variants(text(m, "variants"))?;
            let sweep: Sweep = text(m, "sweep").parse()?;
            let (rows, skipped) = cmd_ablate(&cfg, path(m, "dataset"), &variants, sweep, path(m, "out"))?;
            for s in skipped {
                eprintln!("skipped {s}");
            }
            print!("{}", ablation_csv(&rows));
        }
        "gradcheck" => {
            let rows = cmd_gradcheck(&cfg, m.get_one::<PathBuf>("out").map(PathBuf::as_path))?;
            println!("group,max_rel_err");
            for (g, e) in group_max(&rows) {
                println!("{g},{e:e}");
            }
            gradcheck_verdict(&rows)?;
        }
        "diag" => {
            let agg: GateAggregation = text(m, "aggregation").parse()?;
            let bins: usize = text(m, "bins")
                .parse()
                .map_err(|_| Error::Usage(format!("--bins expects a count, got '{}'", text(m, "bins"))))?;
            let d = cmd_diag(
                &cfg,
                path(m, "checkpoint"),
                path(m, "dataset"),
                text(m, "split"),
                agg,
                bins,
                path(m, "out"),
            )?;
            match d.pearson {
                Some(r) => println!("{} frames, pearson(g_bar, v) = {r:.4}", d.rows.len()),
                None => println!("{} frames, pearson undefined (constant series)", d.rows.len()),
            }
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
    Ok(())
}

/// Process entry point: runs `std::env::args` and maps errors to exit codes
/// (0 ok, 2 usage, 3 data/config, 4 numeric).
pub fn main_exit_code() -> i32 {
    match run(std::env::args_os()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pulse: {e}");
            e.exit_code()
        }
    }
}
