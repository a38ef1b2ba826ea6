use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use dgforecast_cli::{cmd_compare, cmd_evaluate, cmd_simulate, cmd_train, Method, RunConfig};
use dgforecast_core::pipeline::synth::SynthSpec;

#[derive(Parser)]
#[command(name = "dgforecast", version, about = "Probabilistic forecasting for incomplete generation series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic generation series as CSV.
    Simulate {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (JSON); flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a forecaster and write checkpoint, training report and config snapshot.
    Train(RunArgs),
    /// Score a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Tabulate evaluation reports side by side. Use `label=path` to name rows.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<String>,
        #[arg(long, env = "DGFORECAST_OUT", default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV (`timestamp,power`).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    missing_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long, env = "DGFORECAST_OUT", default_value = ".")]
    out_dir: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(r) = self.missing_rate {
            cfg.missing_rate = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
        }
        cfg.resolve()
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { out, config, length, seed } => {
            let mut spec = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => SynthSpec::default(),
            };
            if let Some(n) = length {
                spec.length = n;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let series = cmd_simulate(&spec, &out)?;
            println!("wrote {} points to {}", series.len(), out.display());
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let out = cmd_train(&cfg, &args.out_dir)?;
            println!(
                "{}: stopped at epoch {} ({:?}), best epoch {} with validation loss {:.6}",
                cfg.method.name(),
                out.report.stop_epoch,
                out.report.stop_reason,
                out.report.best_epoch,
                out.report.best_val_loss
            );
        }
        Command::Evaluate { checkpoint, run } => {
            let cfg = run.resolve()?;
            let ev = cmd_evaluate(&checkpoint, &cfg, &run.out_dir)?;
            let r = &ev.report;
            println!("N {}  R {:.3}%  S {:.5}  Sk {:.5}", r.n, r.reliability, r.sharpness, r.skill);
        }
        Command::Compare { reports, out_dir } => {
            print!("{}", cmd_compare(&reports, &out_dir)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
