//! Command-line pipeline around the `xfct` library: phantom generation,
//! scan simulation, pose registration, clustering, network training, volume
//! inference, evaluation, and reporting, driven by one flat JSON config.

pub mod artifacts;
pub mod config;
pub mod render;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::artifacts::RunPaths;
use crate::config::{load_config, parse_override, resolve_config_path};
use crate::stages::{run_all, run_stage, Context, Stage};

#[derive(Parser)]
#[command(
    name = "xfct",
    version,
    about = "Simulated micro-XRF / micro-CT fusion pipeline for 3D mineral segmentation"
)]
struct Cli {
    /// Config name (resolved in the config directory, see XFCT_CONFIG_DIR)
    /// or a path to a JSON file.
    #[arg(long, global = true, default_value = "desk")]
    config: String,
    /// Run directory artifacts are written to.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread override; 1 makes every artifact bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dotted-path config override such as `--set train.epochs=20`; repeatable.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Let `report` collate artifacts from mixed configurations.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Generate the ground-truth phantom volume and its phase catalog.
    Phantom,
    /// Simulate the tomogram and the element maps of every mapped surface.
    Simulate,
    /// Recover each mapped surface's pose inside the tomogram.
    Register,
    /// Cluster the fused element + tomogram features and name the minerals.
    Cluster,
    /// Train the segmentation net on the fused training labels.
    Train,
    /// Segment every tomogram slice with the trained net.
    Segment,
    /// Score the segmentation against held-out surfaces and the truth volume.
    Evaluate,
    /// Collate provenance, headline numbers, and slice renders.
    Report,
    /// Run every stage in order.
    All,
}

pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> xfct::error::Result<()> {
    let mut overrides = Vec::new();
    for raw in &cli.set {
        overrides.push(parse_override(raw)?);
    }
    let path = resolve_config_path(&cli.config);
    let mut config = load_config(&path, &overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if config.threads > 0 {
        // Ignore the error a second initialization returns in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    let ctx = Context::new(config, RunPaths::new(&cli.out), cli.force);
    match cli.command {
        Command::Phantom => run_stage(&ctx, Stage::Phantom),
        Command::Simulate => run_stage(&ctx, Stage::Simulate),
        Command::Register => run_stage(&ctx, Stage::Register),
        Command::Cluster => run_stage(&ctx, Stage::Cluster),
        Command::Train => run_stage(&ctx, Stage::Train),
        Command::Segment => run_stage(&ctx, Stage::Segment),
        Command::Evaluate => run_stage(&ctx, Stage::Evaluate),
        Command::Report => run_stage(&ctx, Stage::Report),
        Command::All => run_all(&ctx),
    }
}
