//! One user's per-timestamp flow: map, encode, combine, schedule, perturb
//! and release.

use serde::{Deserialize, Serialize};

use crate::datagen::DataRow;
use crate::error::{Error, Result};
use crate::quantizer::{build_combined_vector, ApplianceReading, EncodedVector, QuantizationScheme};
use crate::randomizer::{keyed_rng, oue_probabilities, perturb};
use crate::scheduler::{Scheduler, SchedulerConfig, Strategy};

/// What one user shares at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseRecord {
    pub user_id: u64,
    /// 0-based day index.
    pub timestamp: u64,
    pub released: EncodedVector,
    pub strategy: Strategy,
    pub spent_budget_t1: f64,
    pub spent_budget_t2: f64,
    /// Budget the released vector was perturbed with; `None` for the
    /// all-zero placeholder released before any publication.
    pub release_epsilon: Option<f64>,
}

/// Settings every user of one experiment shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scheme: QuantizationScheme,
    pub appliance_count: usize,
    pub scheduler: SchedulerConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.appliance_count == 0 {
            return Err(Error::InvalidParameter("appliance count must be >= 1".into()));
        }
        self.scheduler.validate()
    }

    pub fn vector_len(&self) -> usize {
        self.appliance_count * self.scheme.level_count()
    }
}

#[derive(Debug, Clone)]
pub struct UserState {
    user_id: u64,
    config: PipelineConfig,
    scheduler: Scheduler,
    seed: u64,
    next_day: u64,
}

impl UserState {
    pub fn new(user_id: u64, config: PipelineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let scheduler = Scheduler::with_seed(
            config.scheduler,
            config.appliance_count,
            config.scheme.level_count(),
            crate::randomizer::derive_seed(seed, user_id),
        )?;
        Ok(Self {
            user_id,
            config,
            scheduler,
            seed,
            next_day: 0,
        })
    }

    pub fn user_id(&self) -> u64 {
        self.user_id
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    /// Processes day `day`, which must directly follow the previous one
    /// (the first call expects day 0).
    pub fn process_timestamp(&mut self, readings: &[ApplianceReading], day: u64) -> Result<ReleaseRecord> {
        if day != self.next_day {
            return Err(Error::OutOfOrderTimestamp {
                last: self.next_day.wrapping_sub(1),
                got: day,
            });
        }
        let encoded = build_combined_vector(readings, &self.config.scheme, self.config.appliance_count)?;
        let (seed, user, n) = (self.seed, self.user_id, self.config.appliance_count);
        let decision = self.scheduler.step(&encoded, |v, eps, purpose| {
            let params = oue_probabilities(eps, n)?;
            perturb(v, &params, &mut keyed_rng(seed, user, day, purpose))
        })?;
        self.next_day += 1;
        Ok(ReleaseRecord {
            user_id: self.user_id,
            timestamp: day,
            released: decision.release,
            strategy: decision.strategy,
            spent_budget_t1: decision.dissimilarity_budget,
            spent_budget_t2: decision.publication_budget,
            release_epsilon: decision.release_epsilon,
        })
    }
}

/// Runs days `0..days` for one user. `rows` must belong to that user and be
/// sorted by day; days without rows are processed as all-off readings.
pub fn run_stream(state: &mut UserState, rows: &[DataRow], days: u64) -> Result<Vec<ReleaseRecord>> {
    if let Some(r) = rows.iter().find(|r| r.user_id != state.user_id) {
        return Err(Error::InvalidParameter(format!(
            "row for user {} passed to the stream of user {}",
            r.user_id, state.user_id
        )));
    }
    if let Some(w) = rows.windows(2).find(|w| w[1].day < w[0].day) {
        return Err(Error::OutOfOrderTimestamp {
            last: w[0].day,
            got: w[1].day,
        });
    }
    if let Some(r) = rows.iter().find(|r| r.day >= days) {
        return Err(Error::InvalidParameter(format!(
            "row on day {} beyond the {days}-day stream",
            r.day
        )));
    }
    let mut records = Vec::with_capacity(days as usize);
    let mut rest = rows;
    for day in 0..days {
        let split = rest.iter().position(|r| r.day != day).unwrap_or(rest.len());
        let (today, tail) = rest.split_at(split);
        rest = tail;
        let readings: Vec<ApplianceReading> = today
            .iter()
            .map(|r| ApplianceReading::new(r.appliance_id, r.watts))
            .collect();
        records.push(state.process_timestamp(&readings, day)?);
    }
    Ok(records)
}
