use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use depmax::benchmark::{Grid, Method};
use depmax::commands::{self, Dataset, GradTarget};
use depmax::error::{CliError, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "depmax", version, about = "Dependence estimation and dual-role network training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    #[value(name = "two_moons")]
    TwoMoons,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate dependence between the two halves of a paired CSV.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sweep estimators over correlated Gaussian pairs.
    Benchmark {
        #[arg(long, value_delimiter = ',', required = true)]
        rhos: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// Number of seeds per cell, run as seeds 0..N.
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = Method::ALL)]
        methods: Vec<Method>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Add a wall-time column (the output is then not reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Train a student/teacher pair and write metrics and a checkpoint.
    Train {
        #[arg(long, value_enum)]
        dataset: DatasetKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Labeled training CSV (with `--dataset csv`).
        #[arg(long, required_if_eq("dataset", "csv"))]
        train: Option<PathBuf>,
        /// Labeled validation CSV (with `--dataset csv`).
        #[arg(long, required_if_eq("dataset", "csv"))]
        val: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, value_enum)]
        target: GradTarget,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Estimate { input, method, config } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::estimate(&input, method, &cfg)
        }
        Command::Benchmark { rhos, ns, seeds, out, methods, config, timings } => {
            let cfg = commands::load_config(config.as_deref())?;
            let grid = Grid { methods, rhos, ns, seeds };
            commands::benchmark(&grid, &cfg, timings, &out)
        }
        Command::Train { dataset, config, out_dir, train, val } => {
            let cfg = commands::load_config(config.as_deref())?;
            let dataset = match (dataset, train, val) {
                (DatasetKind::TwoMoons, _, _) => Dataset::TwoMoons,
                (DatasetKind::Csv, Some(train), Some(val)) => Dataset::Csv { train, val },
                _ => return Err(CliError::Usage("--dataset csv needs --train and --val".into())),
            };
            Ok(commands::train(&dataset, &cfg, &out_dir)?.0)
        }
        Command::Gradcheck { target } => commands::gradcheck(target),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::GradCheck { report, .. } = &e {
                print!("{report}");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
