//! The work behind each subcommand, independent of argument parsing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use meterdp_core::aggregator::{impact_shares, ApplianceRanking};
use meterdp_core::datagen::{augment, gen_synthetic, ingest_csv, reference_profile, Dataset, SyntheticParams};
use meterdp_core::evaluation::{run_benchmark_suite, run_experiment};
use meterdp_core::scheduler::SchedulerKind;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::report::{BenchmarkDocument, DatasetSummary, MethodRun, ResultsFile, RunReport, SCHEMA_VERSION};

/// Runs `f` on a pool of `workers` threads (all cores when 0).
pub fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> Result<T, HarnessError> + Send,
) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(f)
}

/// Reads the CSV input or synthesizes readings as configured.
pub fn load_dataset(config: &ExperimentConfig) -> Result<(Dataset, DatasetSummary), HarnessError> {
    let (dataset, source) = match &config.input {
        Some(path) => {
            let ds = ingest_csv(path)?;
            if ds.appliance_count() > config.appliances {
                return Err(HarnessError::Config(format!(
                    "{} has appliance ids up to {} but appliances = {}",
                    path.display(),
                    ds.appliance_count(),
                    config.appliances
                )));
            }
            let days = ds.day_count();
            let ds = Dataset::from_rows(ds.rows().to_vec(), Some(config.appliances), Some(days))?;
            (ds, path.display().to_string())
        }
        None => {
            let ds = match config.distribution.synthetic() {
                Some(family) => {
                    let params = SyntheticParams {
                        max_energy: config.max_energy,
                        ..SyntheticParams::default()
                    };
                    gen_synthetic(
                        family,
                        config.users,
                        config.appliances,
                        config.days,
                        config.seed,
                        &params,
                    )?
                }
                None => augment(&reference_profile(), config.users, config.days, config.seed)?,
            };
            (ds, config.distribution.to_string())
        }
    };
    let summary = DatasetSummary {
        source,
        users: dataset.user_count(),
        days: dataset.day_count(),
        appliances: dataset.appliance_count(),
        readings: dataset.rows().len(),
    };
    Ok((dataset, summary))
}

/// Full experiment for the configured scheduler, or for all four when
/// `sweep` is set.
pub fn run(config: &ExperimentConfig, sweep: bool) -> Result<RunReport, HarnessError> {
    with_workers(config.workers, || {
        let (dataset, summary) = load_dataset(config)?;
        let methods: Vec<SchedulerKind> = if sweep {
            SchedulerKind::ALL.to_vec()
        } else {
            vec![config.method]
        };
        let runs = methods
            .into_iter()
            .map(|method| {
                log::info!("running {method} over {} repetitions", config.repetitions);
                let result = run_experiment(&dataset, &config.experiment(method)?)?;
                Ok(MethodRun { method, result })
            })
            .collect::<Result<_, HarnessError>>()?;
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            dataset: summary,
            runs,
        })
    })
}

pub fn benchmark(config: &ExperimentConfig) -> Result<BenchmarkDocument, HarnessError> {
    with_workers(config.workers, || {
        let (dataset, summary) = load_dataset(config)?;
        let report = run_benchmark_suite(&dataset, &config.benchmark()?)?;
        Ok(BenchmarkDocument {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            dataset: summary,
            report,
        })
    })
}

pub fn generate(config: &ExperimentConfig, path: &Path) -> Result<DatasetSummary, HarnessError> {
    with_workers(config.workers, || {
        let (dataset, summary) = load_dataset(config)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        dataset.write_csv(std::io::BufWriter::new(file))?;
        Ok(summary)
    })
}

/// Ground-truth statistics of a readings file: ranking, shares and level
/// occupancy.
pub fn describe_dataset(config: &ExperimentConfig, path: &Path) -> Result<String, HarnessError> {
    let dataset = ingest_csv(path)?;
    let scheme = config.scheme()?;
    let energy = dataset.true_energy();
    let ranking = ApplianceRanking::from_energies(&energy);
    let shares = impact_shares(&energy)?;
    let counts = dataset.true_level_counts(&scheme)?;
    let d = scheme.level_count();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}: {} users, {} days, {} appliances, {} readings",
        path.display(),
        dataset.user_count(),
        dataset.day_count(),
        dataset.appliance_count(),
        dataset.rows().len()
    );
    let _ = writeln!(
        out,
        "\n{:>4} {:>9} {:>14} {:>8}  level occupancy (1..{d})",
        "rank", "appliance", "energy (W)", "share %"
    );
    for (rank, a) in ranking.0.iter().enumerate() {
        let i = a.appliance_id - 1;
        let mut levels = vec![0u64; d];
        for day in &counts {
            for (l, c) in day[i * d..(i + 1) * d].iter().enumerate() {
                levels[l] += c;
            }
        }
        let levels: Vec<String> = levels.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "{:>4} {:>9} {:>14.0} {:>8.2}  {}",
            rank + 1,
            format!("A{}", a.appliance_id),
            a.energy,
            shares[i],
            levels.join(" ")
        );
    }
    Ok(out)
}

/// Writes `<stem>.json` and `<stem>.txt` under `dir`.
pub fn write_results(dir: &Path, stem: &str, doc: &ResultsFile) -> Result<(PathBuf, PathBuf), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let json = dir.join(format!("{stem}.json"));
    let text = dir.join(format!("{stem}.txt"));
    fs::write(&json, doc.to_json()).map_err(|e| HarnessError::io(&json, e))?;
    fs::write(&text, doc.summary()).map_err(|e| HarnessError::io(&text, e))?;
    Ok((json, text))
}

pub fn read_results(path: &Path) -> Result<ResultsFile, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ResultsFile::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            users: 60,
            days: 4,
            repetitions: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn run_document_round_trips_through_json() {
        let report = run(&small(), false).unwrap();
        assert_eq!(report.runs.len(), 1);
        let doc = ResultsFile::Run(report);
        let back = ResultsFile::from_json(&doc.to_json()).unwrap();
        // NaN p-values come back as NaN, so compare the serialized forms
        assert_eq!(back.to_json(), doc.to_json());
        assert!(doc.summary().contains("lba"));
    }

    #[test]
    fn sweep_gives_one_row_per_scheduler() {
        let report = run(&small(), true).unwrap();
        let methods: Vec<SchedulerKind> = report.runs.iter().map(|r| r.method).collect();
        assert_eq!(methods, SchedulerKind::ALL);
    }

    #[test]
    fn schema_version_is_checked() {
        let doc = ResultsFile::Run(run(&small(), false).unwrap());
        let json = doc
            .to_json()
            .replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
        assert!(matches!(ResultsFile::from_json(&json), Err(HarnessError::Results(_))));
    }

    #[test]
    fn csv_with_too_many_appliances_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "user_id,day,appliance_id,watts\n0,0,16,10\n").unwrap();
        let config = ExperimentConfig {
            input: Some(path),
            ..small()
        };
        assert_eq!(load_dataset(&config).unwrap_err().exit_code(), 2);
    }
}
