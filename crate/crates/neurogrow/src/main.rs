use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use neurogrow::config::ExperimentConfig;
use neurogrow::datasets::{load_bundle, resolve_data_dir};
use neurogrow::experiment::{random_gradcheck, run_growth_experiment, run_inactivity_study};
use neurogrow::netfile::{load_network, save_network};
use neurogrow::report::{emit_inactivity, emit_reports};
use neurogrow::{Error, Result};
use neurogrow_core::diagnostics::{evaluate, measure_inactivity};

#[derive(Parser)]
#[command(name = "neurogrow", version, about = "Grow ReLU networks in width during training")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding the IDX files (default: $NEUROGROW_DATA, then ./data).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the staged growth experiment.
    Grow,
    /// Double a trained layer with each extender and audit the new neurons.
    Inactivity,
    /// Evaluate a saved network on the configured test set.
    Eval {
        #[arg(long)]
        net: PathBuf,
    },
    /// Check backpropagation against finite differences on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Count never-firing neurons of a saved network on the training set.
    Audit {
        #[arg(long)]
        net: PathBuf,
        /// Birth stage counted as "new"; all neurons when omitted.
        #[arg(long)]
        stage: Option<u32>,
    },
}

impl Cli {
    fn config(&self, required: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None if required => return Err(Error::Config("--config <path> is required".into())),
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }

    fn data_dir(&self) -> PathBuf {
        resolve_data_dir(self.data_dir.as_deref())
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::Report(e.to_string()))?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Grow => {
            let cfg = cli.config(true)?;
            let data = load_bundle(&cfg, &cli.data_dir())?;
            let report = run_growth_experiment(&cfg, &data)?;
            emit_reports(&report, &cfg.out_dir)?;
            for (run, net) in report.runs.iter().zip(&report.networks) {
                save_network(net, &cfg.out_dir.join(format!("net_seed{}.ngrow", run.seed)))?;
            }
            for a in &report.aggregates {
                println!(
                    "stage {} width {:.1} test loss {:.6} +- {:.6}{}",
                    a.stage,
                    a.total_width.mean,
                    a.test_loss.mean,
                    a.test_loss.std,
                    a.test_accuracy.map(|m| format!(" acc {:.4}", m.mean)).unwrap_or_default()
                );
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Inactivity => {
            let cfg = cli.config(true)?;
            let data = load_bundle(&cfg, &cli.data_dir())?;
            let study = run_inactivity_study(&cfg, &data)?;
            emit_inactivity(&study, &cfg.out_dir)?;
            for s in &study.summary {
                println!(
                    "{:<13} inactive new neurons {:6.2}% +- {:.2}",
                    s.extender.name(),
                    s.inactive_new_pct.mean,
                    s.inactive_new_pct.std
                );
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Eval { net } => {
            let cfg = cli.config(false)?;
            let network = load_network(net)?;
            let data = load_bundle(&cfg, &cli.data_dir())?;
            print_json(&evaluate(&network, data.test.view())?)?;
        }
        Command::Gradcheck { trials } => {
            let worst = random_gradcheck(cli.seed.unwrap_or(0), *trials)?;
            println!("max relative error {worst:.3e}");
            if worst >= 1e-5 {
                return Err(Error::Report(format!("gradient check failed: {worst:.3e} >= 1e-5")));
            }
        }
        Command::Audit { net, stage } => {
            let cfg = cli.config(false)?;
            let network = load_network(net)?;
            let data = load_bundle(&cfg, &cli.data_dir())?;
            print_json(&measure_inactivity(&network, data.train.x(), *stage)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
