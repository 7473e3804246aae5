use std::path::PathBuf;
use std::process::ExitCode;

use cagst::pipeline::{self, CampaignConfig, PipelineError};
use clap::{Parser, Subcommand};

/// Context-aware gate set tomography campaigns.
#[derive(Debug, Parser)]
#[command(name = "cagst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select fiducials and germs; write B.csv and the circuit list.
    Design(Args),
    /// Run the circuit list on a virtual QPU.
    Simulate(Args),
    /// Fit a gate set to the dataset.
    Reconstruct(Args),
    /// Diamond distances, corrections and (with a truth file) inaccuracies.
    Report(Args),
    /// Reconstruction accuracy across noise scales.
    Sweep(Args),
    /// Design, simulate, reconstruct and report.
    Run(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Campaign configuration (TOML or JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shots per circuit (0: exact probabilities).
    #[arg(long)]
    shots: Option<u64>,
    /// External dataset (JSON lines).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl Args {
    fn load(&self) -> Result<CampaignConfig, PipelineError> {
        let mut cfg = CampaignConfig::load(&self.config)?;
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.shots {
            cfg.shots = s;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Design(a) => pipeline::cmd_design(&a.load()?).map(|_| ()),
        Command::Simulate(a) => pipeline::cmd_simulate(&a.load()?).map(|_| ()),
        Command::Reconstruct(a) => pipeline::cmd_reconstruct(&a.load()?).map(|_| ()),
        Command::Report(a) => {
            let report = pipeline::cmd_report(&a.load()?)?;
            pipeline::render_report(&report, std::io::stdout()).map_err(|source| PipelineError::Io { path: "<stdout>".into(), source })
        }
        Command::Sweep(a) => {
            for s in pipeline::cmd_sweep(&a.load()?)? {
                println!("scale {:>8.4}  error {:.3e}  inaccuracy {:.3e}  ratio {:.4}", s.scale, s.mean_gate_error, s.mean_inaccuracy, s.ratio);
            }
            Ok(())
        }
        Command::Run(a) => {
            let report = pipeline::cmd_run(&a.load()?)?;
            pipeline::render_report(&report, std::io::stdout()).map_err(|source| PipelineError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = std::env::var("CAGST_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
