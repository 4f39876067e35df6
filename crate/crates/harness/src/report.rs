//! Versioned result documents and their plain-text summaries.

use std::fmt::Write as _;

use meterdp_core::evaluation::{BenchmarkReport, ExperimentResult, Summary};
use meterdp_core::scheduler::SchedulerKind;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// `reference`, a synthetic family name, or the CSV path.
    pub source: String,
    pub users: usize,
    pub days: u64,
    pub appliances: usize,
    pub readings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: SchedulerKind,
    pub result: ExperimentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    /// One row per scheduler; a single row unless a sweep was requested.
    pub runs: Vec<MethodRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDocument {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    /// Contains wall-clock timings, so it is not reproducible byte for byte.
    pub report: BenchmarkReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultsFile {
    Run(RunReport),
    Benchmark(BenchmarkDocument),
}

impl ResultsFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let doc: ResultsFile = serde_json::from_str(text).map_err(|e| HarnessError::Results(e.to_string()))?;
        let version = match &doc {
            ResultsFile::Run(r) => r.schema_version,
            ResultsFile::Benchmark(b) => b.schema_version,
        };
        if version != SCHEMA_VERSION {
            return Err(HarnessError::Results(format!(
                "schema version {version}, expected {SCHEMA_VERSION}"
            )));
        }
        Ok(doc)
    }

    pub fn summary(&self) -> String {
        match self {
            ResultsFile::Run(r) => run_summary(r),
            ResultsFile::Benchmark(b) => benchmark_summary(b),
        }
    }
}

fn fmt_summary(s: &Summary, digits: usize) -> String {
    format!(
        "{:.d$} / {:.d$} / {:.d$} / {:.d$}",
        s.mean,
        s.median,
        s.min,
        s.max,
        d = digits
    )
}

fn header(out: &mut String, config: &ExperimentConfig, dataset: &DatasetSummary) {
    let _ = writeln!(
        out,
        "dataset: {} ({} users, {} days, {} appliances, {} readings)",
        dataset.source, dataset.users, dataset.days, dataset.appliances, dataset.readings
    );
    let _ = writeln!(
        out,
        "epsilon {} | window {} | levels {} | estimator {} | seed {} | repetitions {} | top-{}",
        config.epsilon, config.window, config.levels, config.estimator, config.seed, config.repetitions, config.top_k
    );
}

pub fn run_summary(report: &RunReport) -> String {
    let mut out = String::new();
    header(&mut out, &report.config, &report.dataset);
    let _ = writeln!(
        out,
        "\n{:<8} {:<28} {:>10} {:>10} {:>9}",
        "method", "hits mean/median/min/max", "mean p", "median p", "publish"
    );
    for run in &report.runs {
        let r = &run.result;
        let (pubs, apx) = r
            .repetitions
            .iter()
            .fold((0u64, 0u64), |(p, a), x| (p + x.publications, a + x.approximations));
        let share = pubs as f64 / (pubs + apx).max(1) as f64;
        let _ = writeln!(
            out,
            "{:<8} {:<28} {:>10.5} {:>10.5} {:>8.1}%",
            run.method.name(),
            fmt_summary(&r.hits, 2),
            r.mean_p.mean,
            r.mean_p.median,
            100.0 * share
        );
    }
    for run in &report.runs {
        let r = &run.result;
        let _ = writeln!(out, "\n[{}] true ranking and impact shares", run.method);
        let _ = writeln!(
            out,
            "{:>4} {:>9} {:>12} {:>8} {:>8} {:>9}",
            "rank", "appliance", "energy (W)", "true %", "est. %", "mean p"
        );
        for (rank, a) in r.true_ranking.iter().enumerate() {
            let i = a.appliance_id - 1;
            let _ = writeln!(
                out,
                "{:>4} {:>9} {:>12.0} {:>8.2} {:>8.2} {:>9.5}",
                rank + 1,
                format!("A{}", a.appliance_id),
                a.energy,
                r.true_shares[i],
                r.estimated_shares[i],
                r.per_appliance_p[i]
            );
        }
        if let Some(first) = r.repetitions.first() {
            let ids: Vec<String> = first.estimated_top_k.iter().map(|a| format!("A{a}")).collect();
            let _ = writeln!(out, "estimated top-{} in repetition 1: {}", ids.len(), ids.join(" "));
        }
    }
    out
}

pub fn benchmark_summary(doc: &BenchmarkDocument) -> String {
    let mut out = String::new();
    header(&mut out, &doc.config, &doc.dataset);
    let r = &doc.report;
    let _ = writeln!(
        out,
        "baselines: epsilon {} per reading, sensitivity {} W, delta {}",
        r.baseline_epsilon, r.sensitivity, r.delta
    );
    let _ = writeln!(
        out,
        "\n{:<18} {:<28} {:>14}",
        "mechanism", "hits mean/median/min/max", "us / release"
    );
    for m in &r.results {
        let _ = writeln!(
            out,
            "{:<18} {:<28} {:>14.3}",
            m.name,
            fmt_summary(&m.summary, 2),
            m.micros_per_release
        );
    }
    out
}
