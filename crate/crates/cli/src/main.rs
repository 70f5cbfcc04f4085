use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ivus_cli::config::RunConfig;
use ivus_cli::run;

/// Adaptive per-frame subsampling for simulated circular-array ultrasound.
#[derive(Parser)]
#[command(name = "ivus", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`section.key = value` lines); defaults apply
    /// where absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, factor: Option<usize>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(factor) = factor {
            cfg.subsampling_factor = factor;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write checkpoint plus metric logs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Subsampling factor N/K override.
        #[arg(long)]
        factor: Option<usize>,
    },
    /// Evaluate a checkpoint against the paired random baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        factor: Option<usize>,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate learned vs random across subsampling factors.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Factor to sweep; repeat the flag for several (default 2 4 8).
        #[arg(long = "factor")]
        factors: Vec<usize>,
        /// Seeds per factor.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Render one evaluation episode: frames, action strips, and a trace.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        factor: Option<usize>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scan-converted raster side length in pixels.
        #[arg(long, default_value_t = 256)]
        raster_size: usize,
    },
    /// Print the effective configuration in the config-file format.
    PrintConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, factor } => {
            let cfg = common.resolve(factor)?;
            let out = run::run_train(&cfg)?;
            println!("checkpoint: {}", out.checkpoint_path.display());
            println!("train log:  {}", out.train_log_path.display());
            println!("eval log:   {}", out.eval_log_path.display());
            if let Some(m) = out.shipped_eval {
                println!(
                    "shipped checkpoint eval: return {:.4}, mse {:.6}, mae {:.6}, psnr {:.2}, ssim {:.4}",
                    m.mean_return, m.mse, m.mae, m.psnr, m.ssim
                );
            }
            Ok(())
        }
        Command::Eval {
            common,
            factor,
            checkpoint,
        } => {
            let cfg = common.resolve(factor)?;
            let table = run::run_eval(&cfg, &checkpoint)?;
            print!("{}", table.render());
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("eval.csv");
            std::fs::write(&path, table.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("written: {}", path.display());
            Ok(())
        }
        Command::Sweep {
            common,
            factors,
            seeds,
        } => {
            let cfg = common.resolve(None)?;
            let factors = if factors.is_empty() {
                vec![2, 4, 8]
            } else {
                factors
            };
            let out = run::run_sweep(&cfg, &factors, seeds)?;
            print!("{}", out.render());
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("sweep.csv");
            std::fs::write(&path, out.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("written: {}", path.display());
            Ok(())
        }
        Command::Render {
            common,
            factor,
            checkpoint,
            raster_size,
        } => {
            let cfg = common.resolve(factor)?;
            let paths = run::run_render(&cfg, &checkpoint, raster_size)?;
            for p in paths {
                println!("written: {}", p.display());
            }
            Ok(())
        }
        Command::PrintConfig { common } => {
            let cfg = common.resolve(None)?;
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}
