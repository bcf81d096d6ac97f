use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use panelcast::pipeline::{self, error_chain, load_config, RunConfig, RunMode};

/// Country-level indicator forecasting.
#[derive(Parser)]
#[command(name = "panelcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full run: select, tune, evaluate, then forecast the horizon.
    Run(RunArgs),
    /// Write the predictor ranking for each country and stop.
    Rank(RunArgs),
    /// Select, tune and evaluate without forecasting past the data.
    Evaluate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Restrict the run to these countries (repeatable).
    #[arg(long = "country")]
    countries: Vec<String>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut config = load_config(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if !self.countries.is_empty() {
            config.countries = self.countries.clone();
        }
        if let Some(dir) = &self.output {
            config.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

const PARTIAL_FAILURE: u8 = 1;
const CONFIG_OR_DATA_ERROR: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PANELCAST_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!(
                "{failures} countr{} failed",
                if failures == 1 { "y" } else { "ies" }
            );
            ExitCode::from(PARTIAL_FAILURE)
        }
        Err(e) => {
            eprintln!("error: {}", error_chain(e.as_ref()));
            ExitCode::from(CONFIG_OR_DATA_ERROR)
        }
    }
}

/// Returns the number of countries that failed.
fn execute(command: Command) -> anyhow::Result<usize> {
    match command {
        Command::Run(args) => run(&args.load()?, RunMode::Full),
        Command::Evaluate(args) => run(&args.load()?, RunMode::EvaluateOnly),
        Command::Rank(args) => {
            let config = args.load()?;
            let results = pipeline::rank_all(&config)?;
            let mut failures = 0;
            for (country, result) in results {
                match result {
                    Ok(ranking) => {
                        let top: Vec<&str> = ranking.ids().take(config.edr.k).collect();
                        println!("{country}\t{}", top.join(","));
                    }
                    Err(e) => {
                        failures += 1;
                        eprintln!("{country}: {}", error_chain(&e));
                    }
                }
            }
            if failures == config.countries.len() {
                anyhow::bail!("every country failed");
            }
            Ok(failures)
        }
    }
}

fn run(config: &RunConfig, mode: RunMode) -> anyhow::Result<usize> {
    let summary = pipeline::run_all(config, mode)?;
    for row in &summary.rows {
        match (&row.error, row.test_mape, row.band) {
            (None, Some(mape), Some(band)) => {
                println!("{}\ttest MAPE {mape:.2}\t{band}", row.country)
            }
            (Some(e), ..) => eprintln!("{}: {e}", row.country),
            _ => {}
        }
    }
    println!(
        "wrote {} files under {}",
        summary.manifest.len(),
        config.output_dir.display()
    );
    Ok(summary.failures())
}
