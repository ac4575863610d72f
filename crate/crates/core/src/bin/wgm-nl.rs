use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wgm_nonlinear::config::RunConfig;
use wgm_nonlinear::pipeline::{self, Outcome};
use wgm_nonlinear::{Error, Result};

#[derive(Parser)]
#[command(name = "wgm-nl", version, about = "Single-atom resonator nonlinearity: sweeps, coincidences, tomography")]
struct Cli {
    /// TOML run configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// P-overlap and survival versus fiber coupling.
    Sweep,
    /// Delay-resolved coincidence rates for the detector settings.
    Coincidences,
    /// Windowed state reconstruction, metrics and bootstrap errors.
    Tomography,
    /// Check the storage-based sign-flip gate.
    GateCheck,
    /// Fast property checks.
    Verify,
}

fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }
    let out = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Sweep => pipeline::cmd_sweep(&cfg, &out),
        Command::Coincidences => pipeline::cmd_coincidences(&cfg, &out),
        Command::Tomography => pipeline::cmd_tomography(&cfg, &out),
        Command::GateCheck => pipeline::gate_check(&cfg, &out),
        Command::Verify => pipeline::verify(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    match &result {
        Ok(Outcome::Complete) => {}
        Ok(Outcome::Partial(msgs)) => {
            for m in msgs {
                eprintln!("warning: {m}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(pipeline::exit_code(&result) as u8)
}
