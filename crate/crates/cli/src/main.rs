use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use afford_core::affordance::Side;
use afford_core::config::PipelineConfig;
use afford_core::pipeline::{
    cmd_aggregate, cmd_derive, cmd_eval, cmd_lift, cmd_merge, cmd_synth, DeriveArgs, DeriveKind, ImageDirs,
    PipelineError, SampleRange, Selection,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "afford", version, about = "Lift affordance samples and derive primitive affordances")]
struct Cli {
    /// JSON config; `AFFORD__SECTION__KEY` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Object,
    Human,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset and rendered view batches.
    Synth {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lift every view batch of a dataset into 3D samples.
    Lift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a dataset into a primitive field archive.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only samples `start..end`.
        #[arg(long)]
        range: Option<SampleRange>,
        /// Combine with an archive already at `--out`.
        #[arg(long)]
        merge: bool,
    },
    /// Merge two archives built with the same settings.
    Merge { a: PathBuf, b: PathBuf, #[arg(long)] out: PathBuf },
    /// Export contact, orientation or spatial affordance.
    Derive {
        #[arg(long)]
        kind: DeriveKind,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Side the values are reported on.
        #[arg(long, value_enum, default_value = "object")]
        side: SideArg,
        /// `all`, `region:<name>` or an index file.
        #[arg(long, default_value = "all")]
        selection: String,
        /// Output path without extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a field with a reference field or dataset.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred_masks: Option<PathBuf>,
        #[arg(long)]
        truth_masks: Option<PathBuf>,
        #[arg(long)]
        human_masks: Option<PathBuf>,
        #[arg(long)]
        pred_images: Option<PathBuf>,
        #[arg(long)]
        truth_images: Option<PathBuf>,
        /// Metrics JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Writes to stdout; a closed pipe (`afford ... | head`) is not an error.
fn emit(text: &str) -> Result<(), PipelineError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(PipelineError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<(), PipelineError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    emit(&(s + "\n"))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg =
        PipelineConfig::load_with_process_env(cli.config.as_deref()).map_err(|e| PipelineError::Usage(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    log::debug!("config: {}", cfg.to_json());
    match cli.cmd {
        Cmd::Synth { scenario, samples, out } => {
            if let Some(s) = scenario {
                cfg.synth.scenario = s;
            }
            if let Some(n) = samples {
                cfg.synth.samples = n;
            }
            print_json(&cmd_synth(&cfg, &out)?)
        }
        Cmd::Lift { input, out } => print_json(&cmd_lift(&input, &cfg, &out)?),
        Cmd::Aggregate { input, out, range, merge } => {
            let report = cmd_aggregate(&input, &cfg, &out, range, merge)?;
            eprintln!("normalization audit: max |sum - 1| = {:e}", report.audit);
            print_json(&report)
        }
        Cmd::Merge { a, b, out } => print_json(&cmd_merge(&a, &b, &out)?),
        Cmd::Derive { kind, field, dataset, side, selection, out } => {
            let side = match side {
                SideArg::Object => Side::OverObject,
                SideArg::Human => Side::OverHuman,
            };
            let args = DeriveArgs { kind, field, dataset, side, selection: Selection::parse(&selection), out };
            print_json(&cmd_derive(&args, &cfg)?)
        }
        Cmd::Eval { pred, truth, pred_masks, truth_masks, human_masks, pred_images, truth_images, out } => {
            let dirs = ImageDirs { pred_masks, truth_masks, human_masks, pred_images, truth_images };
            let report = cmd_eval(&pred, &truth, &dirs, &cfg)?;
            emit(&report.table())?;
            if let Some(out) = out {
                let s = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::Runtime(e.to_string()))?;
                std::fs::write(&out, s + "\n").map_err(|e| PipelineError::Runtime(format!("{}: {e}", out.display())))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
