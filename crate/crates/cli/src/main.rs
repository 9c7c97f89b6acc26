use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use vesselprune::config::PipelineConfig;
use vesselprune::pipeline::{run_sweep, Layout, Runner, Stage};
use vesselprune::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Synth,
    Heatmap,
    Trace,
    Featurize,
    Train,
    Prune,
    Eval,
    Sweep,
    Pipeline,
}

/// Vessel tree tracing with graph-attention pruning of false branches.
#[derive(Debug, Parser)]
#[command(name = "vesselprune", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Verify upstream artifact hashes before each stage.
    #[arg(long)]
    strict: bool,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.io.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    let out = cfg.io.out_dir.clone();
    let stage = match cli.command {
        Command::Synth => Stage::Synth,
        Command::Heatmap => Stage::Heatmap,
        Command::Trace => Stage::Trace,
        Command::Featurize => Stage::Featurize,
        Command::Train => Stage::Train,
        Command::Prune => Stage::Prune,
        Command::Eval => Stage::Eval,
        Command::Sweep => {
            let table = run_sweep(&cfg, &out, cli.strict)?;
            print!("{}", table.to_text());
            return Ok(());
        }
        Command::Pipeline => {
            let runner = Runner::new(cfg, Layout::single(&out), cli.strict)?;
            for stage in Stage::ALL {
                eprintln!("stage {}", stage.name());
                runner.run(stage)?;
            }
            print!("{}", std::fs::read_to_string(out.join(vesselprune::pipeline::SUMMARY_TXT)).unwrap_or_default());
            return Ok(());
        }
    };
    let runner = Runner::new(cfg, Layout::single(&out), cli.strict)?;
    let manifest = runner.run(stage)?;
    eprintln!("stage {}: {} outputs", stage.name(), manifest.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
