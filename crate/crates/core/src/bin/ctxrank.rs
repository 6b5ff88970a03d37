use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctxrank::harness::{
    cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, parse_grid, run_selftest, ExperimentConfig,
    Method, SweepParam, SweepSpec,
};
use ctxrank::metrics::reports_to_table;

#[derive(Parser)]
#[command(
    name = "ctxrank",
    version,
    about = "Context-aware re-ranking experiments for multi-page product search"
)]
struct Cli {
    /// Accepted for compatibility; every command is already deterministic
    /// for fixed seeds.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog and session log.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the generator seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one embedding method and write its checkpoint.
    Train {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate every configured method against a reference.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "PROD")]
        reference: Method,
    },
    /// Train and evaluate over a parameter grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// lambda_c, lambda_u or dim.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values; defaults depend on the parameter.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Run the gradient, metric, reduction and t-distribution checks.
    Selftest,
}

fn load(config: Option<PathBuf>) -> ctxrank::Result<ExperimentConfig> {
    match config {
        Some(path) => ExperimentConfig::load(&path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> ctxrank::Result<bool> {
    match cli.command {
        Command::Generate { config, seed } => {
            let cfg = load(config)?;
            let stats = cmd_generate(&cfg, seed)?;
            println!(
                "wrote {} and {}",
                cfg.paths.catalog.display(),
                cfg.paths.sessions.display()
            );
            println!("products             {}", stats.products);
            println!("users                {}", stats.users);
            println!("sessions             {}", stats.sessions);
            println!(
                "sessions kept        {} ({:.1}%)",
                stats.sessions_kept,
                100.0 * stats.kept_fraction
            );
            println!("avg pages            {:.2}", stats.avg_pages);
            println!("avg clicks per page  {:.2}", stats.avg_clicks_per_page);
            println!("avg purchases        {:.2}", stats.avg_purchases);
            println!("avg title length     {:.2}", stats.avg_title_len);
            println!("avg query length     {:.2}", stats.avg_query_len);
        }
        Command::Train { method, config } => {
            let cfg = load(config)?;
            let summary = cmd_train(&cfg, method)?;
            println!(
                "{}: {} training entries",
                summary.label, summary.train_entries
            );
            for e in &summary.history {
                println!(
                    "epoch {:>3}  nll {:.4}  valid MRR {:.4}",
                    e.epoch, e.mean_nll, e.valid_mrr
                );
            }
            println!(
                "best epoch {} (valid MRR {:.4}), checkpoint {}",
                summary.best_epoch,
                summary.best_valid_mrr,
                summary.checkpoint.display()
            );
        }
        Command::Evaluate { config, reference } => {
            let cfg = load(config)?;
            let reports = cmd_evaluate(&cfg, reference)?;
            print!("{}", reports_to_table(&reports));
            println!("reports written to {}", cfg.paths.reports.display());
        }
        Command::Sweep {
            config,
            param,
            grid,
        } => {
            let cfg = load(config)?;
            let spec = match grid {
                Some(text) => SweepSpec::new(param, parse_grid(&text)?)?,
                None => SweepSpec::with_default_grid(param),
            };
            let table = cmd_sweep(&cfg, &spec)?;
            print!("{}", table.to_csv());
        }
        Command::Selftest => {
            let report = run_selftest();
            println!("{report}");
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
