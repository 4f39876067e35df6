//! Top-k comparison of the local protocol against centralised baselines that
//! add noise to every reading.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{hit_rate, ApplianceRanking};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::noise::{BenchmarkMechanism, NoiseParams, NoiseSampler};
use crate::evaluation::Summary;
use crate::randomizer::{derive_seed, keyed_rng, StreamPurpose};
use crate::simulation::{simulate_timed, SimulationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub simulation: SimulationConfig,
    pub repetitions: usize,
    pub top_k: usize,
    /// Budget of each baseline per reading.
    pub baseline_epsilon: f64,
    /// Baseline sensitivity per reading, in watts.
    pub sensitivity: f64,
    pub delta: f64,
    pub mechanisms: Vec<BenchmarkMechanism>,
}

impl BenchmarkConfig {
    pub fn new(simulation: SimulationConfig, repetitions: usize, top_k: usize) -> Self {
        let sensitivity = simulation.pipeline.scheme.max_energy();
        Self {
            simulation,
            repetitions,
            top_k,
            baseline_epsilon: 1.0,
            sensitivity,
            delta: 1e-5,
            mechanisms: BenchmarkMechanism::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismResult {
    pub name: String,
    pub hits: Vec<usize>,
    pub summary: Summary,
    /// Mean wall-clock cost per released reading or vector, microseconds.
    /// Not reproducible across runs.
    pub micros_per_release: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub top_k: usize,
    pub repetitions: usize,
    pub baseline_epsilon: f64,
    pub sensitivity: f64,
    pub delta: f64,
    /// The local protocol first, then each baseline in configured order.
    pub results: Vec<MechanismResult>,
}

impl BenchmarkReport {
    /// Result of the local protocol.
    pub fn protocol(&self) -> &MechanismResult {
        &self.results[0]
    }

    pub fn baselines(&self) -> &[MechanismResult] {
        &self.results[1..]
    }
}

/// Name under which the local protocol appears in reports.
pub fn protocol_name(config: &SimulationConfig) -> String {
    format!("oue_{}", config.pipeline.scheduler.kind)
}

fn baseline_energies(dataset: &Dataset, sampler: &NoiseSampler, n: usize, seed: u64) -> Vec<f64> {
    let mut energies = vec![0.0; n];
    for (user, rows) in dataset.users() {
        for day_rows in rows.chunk_by(|a, b| a.day == b.day) {
            let mut rng = keyed_rng(seed, user, day_rows[0].day, StreamPurpose::Benchmark);
            for r in day_rows {
                energies[r.appliance_id - 1] += sampler.sample(r.watts, &mut rng);
            }
        }
    }
    energies
}

pub fn run_benchmark_suite(dataset: &Dataset, config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.simulation.pipeline.validate()?;
    let n = config.simulation.pipeline.appliance_count;
    if config.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
    }
    if config.top_k == 0 || config.top_k > n {
        return Err(Error::InvalidParameter(format!("top_k must lie in 1..={n}")));
    }
    let mut true_energy = dataset.true_energy();
    true_energy.resize(n, 0.0);
    let truth = ApplianceRanking::from_energies(&true_energy);
    let seeds: Vec<u64> = (0..config.repetitions)
        .map(|r| derive_seed(config.simulation.seed, r as u64))
        .collect();

    let protocol: Vec<(usize, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let sim = SimulationConfig {
                seed,
                ..config.simulation.clone()
            };
            let (out, micros) = simulate_timed(dataset, &sim)?;
            let ranking = ApplianceRanking::from_energies(&out.energies);
            Ok((hit_rate(&truth, &ranking, config.top_k)?.hits, micros))
        })
        .collect::<Result<_>>()?;
    let mut results = vec![mechanism_result(protocol_name(&config.simulation), protocol)];

    let readings = dataset.rows().len().max(1) as f64;
    for (m, &kind) in config.mechanisms.iter().enumerate() {
        let params = NoiseParams {
            epsilon: config.baseline_epsilon,
            sensitivity: config.sensitivity,
            delta: config.delta,
            // one share per user reading the same appliance on the same day
            gamma_shares: dataset.user_count().max(1),
            grid: config.simulation.pipeline.scheme.midpoints(),
        };
        let sampler = NoiseSampler::new(kind, &params)?;
        let runs: Vec<(usize, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let energies = baseline_energies(dataset, &sampler, n, derive_seed(seed, 1 + m as u64));
                let micros = start.elapsed().as_secs_f64() * 1e6 / readings;
                let ranking = ApplianceRanking::from_energies(&energies);
                Ok((hit_rate(&truth, &ranking, config.top_k)?.hits, micros))
            })
            .collect::<Result<_>>()?;
        results.push(mechanism_result(kind.name().to_string(), runs));
    }
    Ok(BenchmarkReport {
        top_k: config.top_k,
        repetitions: config.repetitions,
        baseline_epsilon: config.baseline_epsilon,
        sensitivity: config.sensitivity,
        delta: config.delta,
        results,
    })
}

fn mechanism_result(name: String, runs: Vec<(usize, f64)>) -> MechanismResult {
    let hits: Vec<usize> = runs.iter().map(|r| r.0).collect();
    let as_f64: Vec<f64> = hits.iter().map(|&h| h as f64).collect();
    MechanismResult {
        name,
        summary: Summary::of(&as_f64),
        micros_per_release: runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64,
        hits,
    }
}
