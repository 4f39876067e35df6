//! Runs every user's client pipeline over a dataset and estimates each day
//! on the server side.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{estimate_energy, EstimatedHistogram, EstimatorMode, RoundAccumulator};
use crate::datagen::{DataRow, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{run_stream, PipelineConfig, ReleaseRecord, UserState};
use crate::scheduler::{window_spent, BudgetEntry, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub pipeline: PipelineConfig,
    pub estimator: EstimatorMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub histograms: Vec<EstimatedHistogram>,
    /// Estimated total energy per appliance over all days.
    pub energies: Vec<f64>,
    pub publications: u64,
    pub approximations: u64,
    /// Largest budget any user spent inside one sliding window.
    pub max_window_spent: f64,
}

struct UserSummary {
    rounds: Vec<RoundAccumulator>,
    publications: u64,
    approximations: u64,
    max_window_spent: f64,
}

fn run_user(config: &SimulationConfig, user: u64, rows: &[DataRow], days: u64) -> Result<UserSummary> {
    let pipeline = &config.pipeline;
    let mut state = UserState::new(user, pipeline.clone(), config.seed)?;
    let records = run_stream(&mut state, rows, days)?;
    let (n, d) = (pipeline.appliance_count, pipeline.scheme.level_count());
    let mut rounds: Vec<RoundAccumulator> = (0..days).map(|t| RoundAccumulator::new(t, n, d)).collect();
    for r in &records {
        rounds[r.timestamp as usize].add(r)?;
    }
    Ok(UserSummary {
        rounds,
        publications: records.iter().filter(|r| r.strategy == Strategy::Publish).count() as u64,
        approximations: records.iter().filter(|r| r.strategy == Strategy::Approximate).count() as u64,
        max_window_spent: max_window_spent(&records, pipeline.scheduler.window),
    })
}

/// Largest sliding-window spend over one user's records.
pub fn max_window_spent(records: &[ReleaseRecord], window: usize) -> f64 {
    let entries: Vec<BudgetEntry> = records
        .iter()
        .map(|r| BudgetEntry {
            t: r.timestamp + 1,
            dissimilarity: r.spent_budget_t1,
            publication: r.spent_budget_t2,
        })
        .collect();
    entries
        .iter()
        .map(|e| window_spent(&entries, e.t, window))
        .fold(0.0, f64::max)
}

/// Simulates all users of `dataset`. Results do not depend on the number of
/// worker threads: partial sums are integer and merged in user order.
pub fn simulate(dataset: &Dataset, config: &SimulationConfig) -> Result<SimulationOutput> {
    config.pipeline.validate()?;
    if dataset.appliance_count() > config.pipeline.appliance_count {
        return Err(Error::UnknownAppliance {
            id: dataset.appliance_count(),
            roster: config.pipeline.appliance_count,
        });
    }
    let days = dataset.day_count();
    if days == 0 || dataset.user_count() == 0 {
        return Err(Error::InvalidParameter("dataset has no users or days".into()));
    }
    let users: Vec<(u64, &[DataRow])> = dataset.users().collect();
    let summaries: Vec<UserSummary> = users
        .par_iter()
        .map(|&(user, rows)| run_user(config, user, rows, days))
        .collect::<Result<_>>()?;

    let mut iter = summaries.into_iter();
    let mut total = iter.next().expect("at least one user");
    for s in iter {
        for (mine, theirs) in total.rounds.iter_mut().zip(&s.rounds) {
            mine.merge(theirs)?;
        }
        total.publications += s.publications;
        total.approximations += s.approximations;
        total.max_window_spent = total.max_window_spent.max(s.max_window_spent);
    }
    let histograms = total
        .rounds
        .iter()
        .map(|r| r.estimate(config.estimator))
        .collect::<Result<Vec<_>>>()?;
    let energies = estimate_energy(&histograms, &config.pipeline.scheme)?;
    Ok(SimulationOutput {
        histograms,
        energies,
        publications: total.publications,
        approximations: total.approximations,
        max_window_spent: total.max_window_spent,
    })
}

/// Simulation plus its wall-clock cost per released vector in microseconds.
pub fn simulate_timed(dataset: &Dataset, config: &SimulationConfig) -> Result<(SimulationOutput, f64)> {
    let start = Instant::now();
    let out = simulate(dataset, config)?;
    let releases = (out.publications + out.approximations).max(1) as f64;
    Ok((out, start.elapsed().as_secs_f64() * 1e6 / releases))
}
