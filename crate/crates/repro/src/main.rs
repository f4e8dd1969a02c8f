use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cpf_repro::{runs, validate, Dataset, RunConfig};

#[derive(Parser)]
#[command(name = "cpf", version, about = "Conditional past-future correlation datasets")]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise-study seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equal-time correlation curves for the reference parameter sets
    Figure2,
    /// Finite-count and visibility noise study
    AppendixD,
    /// Decay rate and |G|² next to the correlations
    Witness,
    /// Correlations for the configured bath, state and schemes
    Sweep,
    /// Run the invariant checks
    Validate,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        let mut noise = cfg.noise.take().unwrap_or_else(runs::default_noise);
        noise.seed = seed;
        cfg.noise = Some(noise);
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    let out_dir = cli
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let dataset: Dataset = match cli.command {
        Command::Figure2 => runs::figure2(&cfg)?,
        Command::AppendixD => runs::appendix_d(&cfg)?,
        Command::Witness => runs::witness(&cfg)?,
        Command::Sweep => runs::sweep(&cfg)?,
        Command::Validate => {
            let checks = validate::run_all()?;
            for c in &checks {
                println!("{:<8} {} ({})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                return Ok(());
            }
            anyhow::bail!("invariant checks failed");
        }
    };
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join(format!("{}.csv", dataset.name));
    let file =
        std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    dataset.write(std::io::BufWriter::new(file))?;
    println!("{}", path.display());
    Ok(())
}
