use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fkc_harness::plots::emit_plot_data;
use fkc_harness::run::aggregate;
use fkc_harness::{load_config, run_experiment, run_sweep, sweep_cells, Experiment, Result};

#[derive(Parser)]
#[command(name = "fkc", version, about = "Feynman-Kac corrector experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a config and write reports, dumps and metric tables.
    Run {
        config: PathBuf,
        /// Number of consecutive seeds starting at the configured one.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Validate only.
        #[arg(long)]
        dry_run: bool,
        /// Output directory; defaults to `<output.directory>/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Cartesian grid declared under `sweep`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot-ready CSV files for a run directory.
    Plots { dir: PathBuf },
    /// Parse and validate a config without simulating.
    Validate { config: PathBuf },
}

fn default_out(cfg: &fkc_harness::ExperimentConfig, config: &std::path::Path) -> PathBuf {
    let name = if cfg.name.is_empty() {
        config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    } else {
        cfg.name.clone()
    };
    cfg.output.directory.join(name)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            Experiment::build(&cfg)?;
            if cfg.sweep.is_some() {
                println!("{} sweep cells", sweep_cells(&cfg)?.len());
            }
            println!("ok {}", cfg.hash()?);
        }
        Command::Run {
            config,
            seeds,
            dry_run,
            out,
        } => {
            let cfg = load_config(&config)?;
            Experiment::build(&cfg)?;
            if seeds == 0 {
                return Err(fkc_harness::HarnessError::validation(
                    "--seeds",
                    "must be at least 1",
                ));
            }
            if dry_run {
                println!("ok {} (dry run)", cfg.hash()?);
                return Ok(());
            }
            let out = out.unwrap_or_else(|| default_out(&cfg, &config));
            let reports = run_experiment(&cfg, seeds, &out)?;
            for r in &reports {
                let metrics: Vec<String> = r
                    .metrics
                    .iter()
                    .map(|m| format!("{}={:.4e}", m.metric, m.value))
                    .collect();
                println!(
                    "seed {}: log_z={:.4} ess={:.1} {}",
                    r.seed,
                    r.log_z,
                    r.final_ess,
                    metrics.join(" ")
                );
            }
            if reports.len() > 1 {
                for (m, mean, std, _) in aggregate(&reports) {
                    println!("{m}: {mean:.4e} ± {std:.2e}");
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config)?;
            let out = out.unwrap_or_else(|| default_out(&cfg, &config));
            let rows = run_sweep(&cfg, &out)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                out.join("sweep.csv").display()
            );
        }
        Command::Plots { dir } => {
            for b in emit_plot_data(&dir)? {
                println!("{}: {} files", b.seed_dir.display(), b.files.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("FKC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            // only fails if a pool already exists, which cannot happen this early
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
