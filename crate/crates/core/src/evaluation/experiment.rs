//! Repeated end-to-end runs over one dataset: hit rates, similarity
//! p-values and impact shares.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{hit_rate, impact_shares, top_k, ApplianceRanking, RankedAppliance};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::similarity::similarity_from_counts;
use crate::evaluation::Summary;
use crate::randomizer::derive_seed;
use crate::simulation::{simulate, SimulationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub simulation: SimulationConfig,
    pub repetitions: usize,
    pub top_k: usize,
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        self.simulation.pipeline.validate()?;
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.simulation.pipeline.appliance_count {
            return Err(Error::InvalidParameter(format!(
                "top_k must lie in 1..={}",
                self.simulation.pipeline.appliance_count
            )));
        }
        Ok(())
    }

    /// Seed of repetition `r`.
    pub fn repetition_seed(&self, r: usize) -> u64 {
        derive_seed(self.simulation.seed, r as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionOutcome {
    pub seed: u64,
    pub hits: usize,
    pub estimated_top_k: Vec<usize>,
    pub estimated_energies: Vec<f64>,
    #[serde(deserialize_with = "crate::nullable::float")]
    pub mean_p: f64,
    #[serde(deserialize_with = "crate::nullable::floats")]
    pub per_appliance_p: Vec<f64>,
    pub similar_count: usize,
    pub publications: u64,
    pub approximations: u64,
    pub max_window_spent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub true_ranking: Vec<RankedAppliance>,
    pub true_shares: Vec<f64>,
    /// Shares of the estimated energies averaged over repetitions.
    #[serde(deserialize_with = "crate::nullable::floats")]
    pub estimated_shares: Vec<f64>,
    pub hits: Summary,
    pub mean_p: Summary,
    /// Per-appliance p-values averaged over repetitions.
    #[serde(deserialize_with = "crate::nullable::floats")]
    pub per_appliance_p: Vec<f64>,
    pub repetitions: Vec<RepetitionOutcome>,
}

pub fn run_experiment(dataset: &Dataset, params: &ExperimentParams) -> Result<ExperimentResult> {
    params.validate()?;
    let scheme = &params.simulation.pipeline.scheme;
    let n = params.simulation.pipeline.appliance_count;
    let truth_counts = dataset.true_level_counts(scheme)?;
    let mut true_energy = dataset.true_energy();
    true_energy.resize(n, 0.0);
    let true_ranking = ApplianceRanking::from_energies(&true_energy);
    let true_shares = impact_shares(&true_energy)?;

    let repetitions: Vec<RepetitionOutcome> = (0..params.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = params.repetition_seed(r);
            let config = SimulationConfig {
                seed,
                ..params.simulation.clone()
            };
            let out = simulate(dataset, &config)?;
            let ranking = ApplianceRanking::from_energies(&out.energies);
            let hits = hit_rate(&true_ranking, &ranking, params.top_k)?.hits;
            let similarity = similarity_from_counts(&truth_counts, &out.histograms)?;
            Ok(RepetitionOutcome {
                seed,
                hits,
                estimated_top_k: top_k(&out.energies, params.top_k)?.ids(),
                estimated_energies: out.energies,
                mean_p: similarity.mean_p,
                per_appliance_p: similarity.per_appliance,
                similar_count: similarity.similar_count,
                publications: out.publications,
                approximations: out.approximations,
                max_window_spent: out.max_window_spent,
            })
        })
        .collect::<Result<_>>()?;

    let reps = repetitions.len() as f64;
    let mut mean_energy = vec![0.0; n];
    let mut per_appliance_p = vec![0.0; n];
    for rep in &repetitions {
        for (m, e) in mean_energy.iter_mut().zip(&rep.estimated_energies) {
            *m += e / reps;
        }
    }
    for (a, p) in per_appliance_p.iter_mut().enumerate() {
        let column: Vec<f64> = repetitions.iter().map(|rep| rep.per_appliance_p[a]).collect();
        *p = Summary::of(&column).mean;
    }
    let estimated_shares = impact_shares(&mean_energy).unwrap_or_else(|_| vec![f64::NAN; n]);
    let hits: Vec<f64> = repetitions.iter().map(|r| r.hits as f64).collect();
    let ps: Vec<f64> = repetitions.iter().map(|r| r.mean_p).collect();
    Ok(ExperimentResult {
        true_ranking: true_ranking.0,
        true_shares,
        estimated_shares,
        hits: Summary::of(&hits),
        mean_p: Summary::of(&ps),
        per_appliance_p,
        repetitions,
    })
}
