//! `flowcheck`: sandwich check of the outward flow map.

use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use isopar_core::experiments::{run, ExperimentConfig, ExperimentId};

#[derive(Debug, Parser)]
#[command(version, about = "Verify the flow-map sandwich on a domain")]
struct Args {
    /// `disk`, `lens`, `flower` or a domain description file.
    #[arg(long)]
    domain: String,
    /// Comma-separated flow times in [0, 0.05].
    #[arg(long = "t", value_delimiter = ',', default_values_t = [0.0125, 0.025, 0.05])]
    ts: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut config = ExperimentConfig::new(ExperimentId::Flow, &args.domain, 1, &[]);
    config.ts = args.ts;
    config.seed = args.seed;
    let table = run(&config)?;
    let csv = table.to_csv()?;
    std::fs::write(&args.out, &csv)?;
    print!("{csv}");
    for (k, v) in &table.summary {
        println!("# {k} = {v:.6e}");
    }
    Ok(())
}
