use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use forge_core::exec::ExecMode;
use forge_core::imputer::CorrelationMethod;
use forge_core::pipeline::{self, PipelineConfig, PipelineError, PipelineStage};
use tracing_subscriber::EnvFilter;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "forge",
    version,
    about = "Build versioned, imputed country datasets from Factbook entity files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Corr {
    Pearson,
    Spearman,
}

#[derive(Clone, Copy, ValueEnum)]
enum Exec {
    Parallel,
    Sequential,
}

#[derive(clap::Args)]
struct Overrides {
    /// JSON pipeline configuration; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ridge_threshold: Option<f64>,
    #[arg(long, value_enum)]
    corr: Option<Corr>,
    #[arg(long, value_enum)]
    exec: Option<Exec>,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages and write v1..v5 snapshots plus reports.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of parse,clean,construct,encode,impute.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<PipelineStage>>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the version table and imputation totals of a finished run.
    Report { dir: PathBuf },
    /// Sweep ridge feature-selection thresholds and write benchmark_grid.csv.
    Benchmark {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn build_config(
    o: &Overrides,
    input: Option<PathBuf>,
    out: PathBuf,
) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &o.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if input.is_some() {
        cfg.input_dir = input;
    }
    cfg.output_dir = Some(out);
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(t) = o.ridge_threshold {
        cfg.ridge_threshold = t;
    }
    if let Some(c) = o.corr {
        cfg.correlation = match c {
            Corr::Pearson => CorrelationMethod::Pearson,
            Corr::Spearman => CorrelationMethod::Spearman,
        };
    }
    if let Some(e) = o.exec {
        cfg.exec = match e {
            Exec::Parallel => ExecMode::Parallel,
            Exec::Sequential => ExecMode::Sequential,
        };
    }
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Run {
            input,
            out,
            stages,
            overrides,
        } => {
            let mut cfg = build_config(&overrides, input, out)?;
            if let Some(s) = stages {
                cfg.stages = s;
            }
            let report = pipeline::run(&cfg)?;
            print!("{}", pipeline::report_render(&report));
        }
        Command::Report { dir } => {
            print!("{}", pipeline::report_render(&pipeline::load_report(&dir)?));
        }
        Command::Benchmark {
            input,
            out,
            overrides,
        } => {
            let cfg = build_config(&overrides, Some(input), out)?;
            let grid = pipeline::benchmark(&cfg)?;
            println!(
                "{:<14}{:>10}{:>11}{:>7}",
                "method", "threshold", "successes", "runs"
            );
            for r in &grid.rows {
                let th = r
                    .threshold
                    .map(|t| format!("{t:.1}"))
                    .unwrap_or_else(|| "-".into());
                println!("{:<14}{:>10}{:>11}{:>7}", r.method, th, r.successes, r.runs);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("forge: {e}");
            ExitCode::from(match e {
                PipelineError::ConfigInvalid(_) => EXIT_CONFIG,
                PipelineError::StageFailure { .. } => EXIT_STAGE,
            })
        }
    }
}
