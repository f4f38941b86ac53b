use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mals::experiment::{run_custom, run_network, run_simple, ExperimentConfig, Format};
use mals::Error;

#[derive(Parser)]
#[command(
    name = "mals",
    version,
    about = "Moment least-squares identification of linear systems with multiplicative noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Consistency curve on the two-state benchmark system.
    Simple(Opts),
    /// Known-direction variance study on random networks.
    Network(Opts),
    /// Full pipeline on a system file named in the config.
    Custom(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Opts {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest rollout count (simple, custom) or rollouts per seed (network).
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for rollout generation.
    #[arg(long)]
    threads: Option<usize>,
}

impl Opts {
    fn config(&self) -> mals::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = Some(vec![s]);
        }
        if let Some(r) = self.rollouts {
            cfg.rollouts = Some(r);
            cfg.grid = None;
        }
        if self.horizon.is_some() {
            cfg.horizon = self.horizon;
        }
        if self.out.is_some() {
            cfg.out.clone_from(&self.out);
        }
        if let Some(f) = self.format {
            cfg.format = Some(match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            });
        }
        Ok(cfg)
    }
}

fn emit<T: Serialize>(
    cfg: &ExperimentConfig,
    json: &T,
    csv: impl FnOnce(&mut dyn Write) -> mals::Result<()>,
) -> mals::Result<()> {
    let mut out: Box<dyn Write> = match &cfg.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    match cfg.format.unwrap_or_default() {
        Format::Csv => csv(&mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, json)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn run(command: Command) -> mals::Result<()> {
    let opts = match &command {
        Command::Simple(o) | Command::Network(o) | Command::Custom(o) => o,
    };
    let cfg = opts.config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match command {
        Command::Simple(_) => {
            let curve = run_simple(&cfg)?;
            emit(&cfg, &curve, |w| curve.write_csv(w))
        }
        Command::Network(_) => {
            let report = run_network(&cfg)?;
            emit(&cfg, &report, |w| report.write_csv(w))
        }
        Command::Custom(_) => {
            let report = run_custom(&cfg)?;
            emit(&cfg, &report, |w| report.curve.write_csv(w))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_numerical() {
                3
            } else if matches!(e, Error::Io(_) | Error::Csv(_)) {
                1
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}
