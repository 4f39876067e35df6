use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meterdp::commands;
use meterdp::report::ResultsFile;
use meterdp::{ConfigArgs, ExperimentConfig, HarnessError, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "meterdp",
    version,
    about = "Locally private appliance-level energy sharing: simulator and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic or augmented dataset as CSV
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for results
        #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
        out: PathBuf,
        /// CSV path; defaults to <out>/dataset.csv
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the full experiment and write run.json and run.txt
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
        out: PathBuf,
        /// Run every scheduler instead of the configured one
        #[arg(long)]
        sweep: bool,
    },
    /// Compare against centralised noise baselines; writes benchmark.json and benchmark.txt
    Benchmark {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
        out: PathBuf,
    },
    /// Summarise a results JSON file or a readings CSV
    Evaluate {
        file: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn echo(config: &ExperimentConfig) {
    log::info!("config: {}", serde_json::to_string(config).expect("config serializes"));
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Generate { config, out, csv } => {
            let config = ExperimentConfig::resolve(&config)?;
            echo(&config);
            let path = csv.unwrap_or_else(|| out.join("dataset.csv"));
            let summary = commands::generate(&config, &path)?;
            println!(
                "wrote {} ({} users, {} days, {} readings)",
                path.display(),
                summary.users,
                summary.days,
                summary.readings
            );
        }
        Command::Run { config, out, sweep } => {
            let config = ExperimentConfig::resolve(&config)?;
            echo(&config);
            let doc = ResultsFile::Run(commands::run(&config, sweep)?);
            finish(&out, "run", &doc)?;
        }
        Command::Benchmark { config, out } => {
            let config = ExperimentConfig::resolve(&config)?;
            echo(&config);
            let doc = ResultsFile::Benchmark(commands::benchmark(&config)?);
            finish(&out, "benchmark", &doc)?;
        }
        Command::Evaluate { file, config } => {
            if file.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                let config = ExperimentConfig::resolve(&config)?;
                print!("{}", commands::describe_dataset(&config, &file)?);
            } else {
                print!("{}", commands::read_results(&file)?.summary());
            }
        }
    }
    Ok(())
}

fn finish(out: &Path, stem: &str, doc: &ResultsFile) -> Result<(), HarnessError> {
    let (json, text) = commands::write_results(out, stem, doc)?;
    print!("{}", doc.summary());
    println!("\nwrote {} and {}", json.display(), text.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
