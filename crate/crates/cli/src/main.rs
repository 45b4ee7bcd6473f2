use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use robscatter::config::{ExperimentConfig, OutputFormat};
use robscatter::experiment::{reproduce_figure, run_convergence_experiment, spectrum};
use robscatter::io::{self, EstimateRecord};
use robscatter::sampling::{sample, ScatterModel};
use robscatter::{estimator, Error, WeightFunction};

/// Robust scatter estimation and its large-dimensional spectrum.
#[derive(Parser)]
#[command(name = "robscatter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the scatter matrix of one sample and write it as JSON.
    Estimate(Common),
    /// Write the model spectral density of one sample.
    Spectrum(Common),
    /// Run the convergence study and write its table.
    Experiment(Common),
    /// Write the data behind one of the three-cluster figures.
    ReproduceFigure {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults to the three-cluster setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed, replacing the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Non-convergence exits with 2, everything else with 1.
enum Failure {
    NotConverged(String),
    Error(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::NoConvergence { .. }) => Failure::NotConverged(format!("{e:#}")),
            _ => Failure::Error(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::three_cluster(500, 2500),
    };
    if let Some(seed) = common.seed {
        cfg.seeds[0] = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(format) = common.format {
        cfg.format = match format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    io::save(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn run_estimate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let model = Arc::new(ScatterModel::new(cfg.model.clone())?);
    let seed = cfg.seeds[0];
    let s = sample(&model, seed);
    let w = WeightFunction::new(cfg.weight.clone(), model.aspect_ratio())?;
    let r = estimator::estimate(&s, &w, &cfg.estimator)?;
    let record = EstimateRecord::new(&r);
    write(
        &cfg.output_dir,
        &format!("estimate_seed{seed}.json"),
        &io::to_json(&record)?,
    )?;
    if cfg.format == OutputFormat::Csv {
        write(
            &cfg.output_dir,
            &format!("estimate_seed{seed}_eigenvalues.csv"),
            &io::eigenvalues_csv(&record.eigenvalues),
        )?;
    }
    println!(
        "iterations {}, residual {:.3e}, converged {}",
        r.iterations, r.residual, r.converged
    );
    if !r.converged {
        return Err(Failure::NotConverged(format!(
            "estimator stopped after {} iterations with residual {:.3e}",
            r.iterations, r.residual
        )));
    }
    Ok(())
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let seed = cfg.seeds[0];
    let density = spectrum(cfg, seed)?;
    match cfg.format {
        OutputFormat::Csv => write(
            &cfg.output_dir,
            &format!("density_seed{seed}.csv"),
            &io::density_csv(&density),
        )?,
        OutputFormat::Json => write(
            &cfg.output_dir,
            &format!("density_seed{seed}.json"),
            &io::to_json(&density)?,
        )?,
    };
    println!("mass {:.5}, support {:?}", density.mass, density.support);
    Ok(())
}

fn run_experiment(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let spec = &cfg.convergence;
    let table = run_convergence_experiment(cfg, &spec.sizes, spec.reps)?;
    match cfg.format {
        OutputFormat::Csv => {
            write(
                &cfg.output_dir,
                "convergence.csv",
                &io::convergence_csv(&table.rows),
            )?;
            write(
                &cfg.output_dir,
                "convergence_summary.csv",
                &io::summary_csv(&table.summary),
            )?;
        }
        OutputFormat::Json => {
            write(&cfg.output_dir, "convergence.json", &io::to_json(&table)?)?;
        }
    }
    for s in &table.summary {
        println!(
            "N = {:>5}, n = {:>6}: median {:.4e} [{:.4e}, {:.4e}], {}/{} converged",
            s.dim, s.samples, s.median, s.lower_quartile, s.upper_quartile, s.converged, s.total
        );
    }
    let failed = table.rows.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        return Err(Failure::NotConverged(format!(
            "{failed} cells did not converge"
        )));
    }
    Ok(())
}

fn run_figure(cfg: &ExperimentConfig, which: u8) -> Result<(), Failure> {
    let report = reproduce_figure(cfg, which, cfg.seeds[0], &cfg.output_dir)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    if let Some(ks) = report.ks_distance {
        println!("KS distance {ks:.4}, support {:?}", report.support);
    }
    println!("lambda_max {:.4}", report.lambda_max);
    if !report.converged {
        return Err(Failure::NotConverged(format!(
            "estimator stopped after {} iterations with residual {:.3e}",
            report.iterations, report.residual
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Estimate(common) => run_estimate(&load_config(&common)?),
        Command::Spectrum(common) => run_spectrum(&load_config(&common)?),
        Command::Experiment(common) => run_experiment(&load_config(&common)?),
        Command::ReproduceFigure { which, common } => run_figure(&load_config(&common)?, which),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: no convergence: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
