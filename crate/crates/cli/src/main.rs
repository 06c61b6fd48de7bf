//! Pipeline runner: fetch -> ingest -> augment -> detect -> features ->
//! train -> sweep -> evaluate -> stress -> report, plus `synth` for the
//! offline mini-dataset. One declarative JSON config drives every stage;
//! flags override individual fields.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rhythmkit_core::pipeline::{run_stage, RunConfig, RuntimeFlags, Stage};
use rhythmkit_core::routing::AggMode;
use rhythmkit_core::Error;

/// Exit codes: 0 success, 1 validation, 2 data error, 3 internal.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Validation(_) | Error::UnsupportedRate(_) => 1,
        Error::Parse { .. }
        | Error::ChecksumMismatch { .. }
        | Error::Network { .. }
        | Error::MissingArtifact { .. }
        | Error::HashMismatch(_) => 2,
        Error::DimensionMismatch { .. }
        | Error::NonFinite { .. }
        | Error::Io(_)
        | Error::Json(_) => 3,
    }
}

#[derive(Parser)]
#[command(
    name = "rhythmkit",
    version,
    about = "Segment-contextualized ECG beat classification pipeline"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "rhythmkit.json")]
    config: PathBuf,

    /// Parallelism bound for segment-level work.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Never touch the network; fail if a file is not cached.
    #[arg(long, global = true)]
    offline: bool,

    /// Override the dataset name.
    #[arg(long, global = true)]
    dataset: Option<String>,

    /// Ablation override for the routing threshold.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Segment confidence aggregation: mean or min.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<AggMode>,

    #[command(subcommand)]
    command: Command,
}

fn parse_mode(s: &str) -> Result<AggMode, String> {
    match s {
        "mean" => Ok(AggMode::Mean),
        "min" => Ok(AggMode::Min),
        other => Err(format!("unknown mode `{other}` (use mean or min)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Download (or verify cached) dataset files with checksums.
    Fetch,
    /// Parse records, cut segments, count classes, build the split.
    Ingest,
    /// Plan and cut the shift-based minority-class windows.
    Augment,
    /// Run the R-peak detector over every segment.
    Detect,
    /// Compute the 23-dimensional per-beat feature vectors.
    Features,
    /// Train the minimal and rich classifiers on d1.
    Train,
    /// Induce the confidence threshold on d2.
    Sweep,
    /// Route the test split and report metrics.
    Evaluate,
    /// Peak-perturbation stress protocol on the test split.
    Stress,
    /// Verify the artifact chain and render final tables.
    Report,
    /// Generate the synthetic mini-dataset into the dataset directory.
    Synth,
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Fetch => Stage::Fetch,
            Command::Ingest => Stage::Ingest,
            Command::Augment => Stage::Augment,
            Command::Detect => Stage::Detect,
            Command::Features => Stage::Features,
            Command::Train => Stage::Train,
            Command::Sweep => Stage::Sweep,
            Command::Evaluate => Stage::Evaluate,
            Command::Stress => Stage::Stress,
            Command::Report => Stage::Report,
            Command::Synth => Stage::Synth,
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(jobs) = cli.jobs {
        config.jobs = Some(jobs);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dataset) = cli.dataset {
        config.dataset.name = dataset;
    }
    if let Some(mode) = cli.mode {
        config.routing.mode = mode;
    }
    let flags = RuntimeFlags {
        offline: cli.offline,
        tau_override: cli.tau,
    };
    let stage = cli.command.stage();
    run_stage(stage, &config, &flags)?;
    println!(
        "{} done (artifacts in {})",
        stage.name(),
        config.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
