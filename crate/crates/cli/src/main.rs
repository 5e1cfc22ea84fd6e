//! `isopar`: runs one experiment and writes its tables, plots and manifest.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use isopar_core::experiments::{run, write_outputs, ExperimentConfig, ExperimentId};
use isopar_core::isogeom::BlendKind;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Experiment {
    Wmp,
    Converge,
    Geom,
    Interp,
    Matident,
    Flow,
}

impl From<Experiment> for ExperimentId {
    fn from(e: Experiment) -> Self {
        match e {
            Experiment::Wmp => ExperimentId::Wmp,
            Experiment::Converge => ExperimentId::Converge,
            Experiment::Geom => ExperimentId::Geom,
            Experiment::Interp => ExperimentId::Interp,
            Experiment::Matident => ExperimentId::Matident,
            Experiment::Flow => ExperimentId::Flow,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Blend {
    Projected,
    Radial,
}

#[derive(Debug, Parser)]
#[command(version, about = "Isoparametric finite element experiments")]
struct Args {
    /// Experiment to run; omit when `--config` is given.
    experiment: Option<Experiment>,
    /// JSON file mirroring the experiment configuration.
    #[arg(long, conflicts_with = "experiment")]
    config: Option<PathBuf>,
    /// `disk`, `lens`, `flower` or a domain description file.
    #[arg(long, default_value = "disk")]
    domain: String,
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Comma-separated, strictly decreasing mesh sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    hs: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Flow times for the `flow` experiment.
    #[arg(long = "t", value_delimiter = ',', default_values_t = [0.0125, 0.025, 0.05])]
    ts: Vec<f64>,
    #[arg(long, value_enum, default_value = "projected")]
    blend: Blend,
    #[arg(long)]
    quadrature_degree: Option<usize>,
    /// Also write the stiffness matrices in coordinate format.
    #[arg(long)]
    dump_matrix: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn config_from(args: &Args) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = ExperimentConfig::from_json(&text)?;
        config.out = Some(config.out.clone().unwrap_or_else(|| args.out.clone()));
        config.dump_matrix |= args.dump_matrix;
        return Ok(config);
    }
    let Some(experiment) = args.experiment else {
        bail!("an experiment name or --config is required");
    };
    let mut config = ExperimentConfig::new(experiment.into(), &args.domain, args.degree, &args.hs);
    config.seed = args.seed;
    config.ts = args.ts.clone();
    config.blend = match args.blend {
        Blend::Projected => BlendKind::Projected,
        Blend::Radial => BlendKind::Radial,
    };
    config.quadrature_degree = args.quadrature_degree;
    config.dump_matrix = args.dump_matrix;
    config.out = Some(args.out.clone());
    Ok(config)
}

fn main() -> Result<()> {
    let args = Args::parse();
    let config = config_from(&args)?;
    let table = run(&config)?;
    let out = config.out.clone().expect("output directory set");
    let written = write_outputs(&table, &config, &out)?;
    print!("{}", table.to_csv()?);
    for (k, v) in &table.summary {
        println!("# {k} = {v:.6e}");
    }
    for (row, message) in &table.failures {
        eprintln!("row {row} failed: {message}");
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    if table.failures.is_empty() {
        Ok(())
    } else {
        bail!("{} row(s) failed", table.failures.len())
    }
}
