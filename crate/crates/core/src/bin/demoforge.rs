use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use demoforge::gen::{ENDPOINT_ENV, TIMEOUT_ENV};
use demoforge::pipeline::{cmd_evaluate, cmd_prepare, cmd_produce, cmd_synth, MockKind, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "demoforge", version, about = "Hand-to-gripper demonstration pipeline")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Generation service base URL.
    #[arg(long, global = true, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    /// Per-request timeout for the generation service.
    #[arg(long, global = true, env = TIMEOUT_ENV)]
    timeout_ms: Option<u64>,
    /// Use an in-process generator instead of the service.
    #[arg(long, global = true, value_enum)]
    mock: Option<Mock>,
    /// Truth directory for `--mock composite`.
    #[arg(long, global = true)]
    truth_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Output directory (report file for `evaluate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite output produced with a different configuration.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mock {
    Echo,
    Composite,
}

#[derive(Subcommand)]
enum Command {
    /// Align a gripper recording to a hand recording and composite targets.
    Prepare { hand: PathBuf, gripper: PathBuf },
    /// Extract actions from a hand recording and generate gripper frames.
    Produce { hand: PathBuf },
    /// Score predicted frames against truth.
    Evaluate { pred: PathBuf, truth: PathBuf },
    /// Render a synthetic paired episode from a scene script.
    Synth { script: Option<PathBuf> },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    // clap already folds the environment into these flags
    if let Some(e) = cli.endpoint {
        config.generator.endpoint = Some(e);
    }
    if let Some(t) = cli.timeout_ms {
        config.generator.timeout_ms = t;
    }
    if let Some(m) = cli.mock {
        config.generator.mock = Some(match m {
            Mock::Echo => MockKind::Echo,
            Mock::Composite => MockKind::Composite,
        });
    }
    if let Some(d) = cli.truth_dir {
        config.generator.truth_dir = Some(d);
    }
    if let Some(c) = cli.concurrency {
        config.generator.concurrency = c;
    }
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));

    match cli.command {
        Command::Prepare { hand, gripper } => {
            let s = cmd_prepare(&hand, &gripper, &out("prepared"), &config, cli.force)?;
            println!(
                "prepared {} aligned pairs ({} hand, {} gripper frames, {} interactive)",
                s.aligned_pairs, s.hand_frames, s.gripper_frames, s.interactive_frames
            );
        }
        Command::Produce { hand } => {
            let s = cmd_produce(&hand, &out("produced"), &config, cli.force)?;
            println!("produced {} frames, contact events {:?}", s.frames, s.contact_events);
        }
        Command::Evaluate { pred, truth } => {
            let r = cmd_evaluate(&pred, &truth, &out("report.json"), &config)?;
            let psnr = r.mean_psnr_db.map_or("inf".to_string(), |v| format!("{v:.4}"));
            println!("{} frames: mean PSNR {psnr} dB, mean SSIM {:.4}", r.per_frame.len(), r.mean_ssim);
        }
        Command::Synth { script } => {
            let s = cmd_synth(script.as_deref(), &out("synth"), cli.force)?;
            println!(
                "rendered {} hand and {} gripper frames, contact windows {:?}",
                s.hand_frames, s.gripper_frames, s.contact_windows
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
