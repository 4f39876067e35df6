//! Server side: per-timestamp bit sums, per-level count estimation and the
//! top-k analysis built on it.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ReleaseRecord;
use crate::quantizer::{level_position, EncodedVector, QuantizationScheme};
use crate::randomizer::{oue_probabilities, PerturbationParams};

/// Position-wise sums of released vectors plus the number of vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSums {
    sums: Vec<u64>,
    users: u64,
    appliance_count: usize,
    level_count: usize,
}

impl BitSums {
    pub fn new(appliance_count: usize, level_count: usize) -> Self {
        Self {
            sums: vec![0; appliance_count * level_count],
            users: 0,
            appliance_count,
            level_count,
        }
    }

    pub fn from_vectors<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EncodedVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or(Error::EmptyRound)?;
        let mut sums = Self::new(first.appliance_count(), first.level_count());
        sums.add(first)?;
        for v in iter {
            sums.add(v)?;
        }
        Ok(sums)
    }

    pub fn add(&mut self, vector: &EncodedVector) -> Result<()> {
        if vector.appliance_count() != self.appliance_count || vector.level_count() != self.level_count {
            return Err(Error::LengthMismatch {
                expected: self.sums.len(),
                actual: vector.len(),
            });
        }
        for (s, &b) in self.sums.iter_mut().zip(vector.bits()) {
            *s += b as u64;
        }
        self.users += 1;
        Ok(())
    }

    /// Associative combine of two partial sums.
    pub fn merge(&mut self, other: &BitSums) -> Result<()> {
        if other.appliance_count != self.appliance_count || other.level_count != self.level_count {
            return Err(Error::LengthMismatch {
                expected: self.sums.len(),
                actual: other.sums.len(),
            });
        }
        for (s, o) in self.sums.iter_mut().zip(&other.sums) {
            *s += o;
        }
        self.users += other.users;
        Ok(())
    }

    pub fn sums(&self) -> &[u64] {
        &self.sums
    }

    pub fn users(&self) -> u64 {
        self.users
    }

    pub fn appliance_count(&self) -> usize {
        self.appliance_count
    }

    pub fn level_count(&self) -> usize {
        self.level_count
    }
}

fn check_round(records: &[ReleaseRecord]) -> Result<u64> {
    let first = records.first().ok_or(Error::EmptyRound)?;
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if r.timestamp != first.timestamp {
            return Err(Error::MixedTimestamps(first.timestamp, r.timestamp));
        }
        if !seen.insert(r.user_id) {
            return Err(Error::DuplicateUser(r.user_id));
        }
    }
    Ok(first.timestamp)
}

/// Sums every record of one timestamp.
pub fn accumulate(records: &[ReleaseRecord]) -> Result<BitSums> {
    check_round(records)?;
    BitSums::from_vectors(records.iter().map(|r| &r.released))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// `(y - k q) / (p - q)`, unbiased for k users.
    #[default]
    Standard,
    /// `(y - d q) / (p - q)` with d the level count. Biased unless the user
    /// count equals d; kept for comparison runs.
    LevelOffset,
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::Standard => "standard",
            EstimatorMode::LevelOffset => "level_offset",
        })
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "level_offset" => Ok(Self::LevelOffset),
            _ => Err(Error::Unknown {
                kind: "estimator mode",
                name: s.to_string(),
            }),
        }
    }
}

/// Estimated user counts per appliance and level for one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedHistogram {
    pub timestamp: u64,
    pub appliance_count: usize,
    pub level_count: usize,
    pub user_count: u64,
    /// `counts[(a - 1) * d + (l - 1)]` for appliance `a` and level `l`. Raw
    /// estimates, possibly negative.
    pub counts: Vec<f64>,
}

impl EstimatedHistogram {
    pub fn zeros(timestamp: u64, appliance_count: usize, level_count: usize) -> Self {
        Self {
            timestamp,
            appliance_count,
            level_count,
            user_count: 0,
            counts: vec![0.0; appliance_count * level_count],
        }
    }

    pub fn count(&self, appliance_id: usize, level: usize) -> f64 {
        self.counts[(appliance_id - 1) * self.level_count + level - 1]
    }

    /// Estimated counts of one appliance in ascending level order.
    pub fn appliance(&self, appliance_id: usize) -> &[f64] {
        let d = self.level_count;
        &self.counts[(appliance_id - 1) * d..appliance_id * d]
    }

    fn add(&mut self, other: &EstimatedHistogram) {
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.user_count += other.user_count;
    }
}

pub fn estimate_histogram(
    sums: &BitSums,
    params: &PerturbationParams,
    mode: EstimatorMode,
    timestamp: u64,
) -> Result<EstimatedHistogram> {
    if sums.users == 0 {
        return Err(Error::EmptyRound);
    }
    if params.appliance_count != sums.appliance_count {
        return Err(Error::InvalidParameter(format!(
            "parameters for {} appliances applied to sums over {}",
            params.appliance_count, sums.appliance_count
        )));
    }
    let denom = params.p - params.q;
    if denom == 0.0 {
        return Err(Error::Degenerate("p equals q, counts are not identifiable".into()));
    }
    let d = sums.level_count;
    let offset = match mode {
        EstimatorMode::Standard => sums.users as f64 * params.q,
        EstimatorMode::LevelOffset => d as f64 * params.q,
    };
    let mut counts = Vec::with_capacity(sums.sums.len());
    for block in sums.sums.chunks(d) {
        for level in 1..=d {
            let y = block[level_position(level, d)] as f64;
            counts.push((y - offset) / denom);
        }
    }
    Ok(EstimatedHistogram {
        timestamp,
        appliance_count: sums.appliance_count,
        level_count: d,
        user_count: sums.users,
        counts,
    })
}

/// Per-timestamp accumulator that keeps releases perturbed under different
/// budgets apart, since each needs its own `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundAccumulator {
    timestamp: u64,
    appliance_count: usize,
    level_count: usize,
    /// Keyed by the bit pattern of the release budget.
    groups: BTreeMap<u64, BitSums>,
    /// Records released before any publication; they carry no information.
    placeholders: u64,
}

impl RoundAccumulator {
    pub fn new(timestamp: u64, appliance_count: usize, level_count: usize) -> Self {
        Self {
            timestamp,
            appliance_count,
            level_count,
            groups: BTreeMap::new(),
            placeholders: 0,
        }
    }

    pub fn add(&mut self, record: &ReleaseRecord) -> Result<()> {
        if record.timestamp != self.timestamp {
            return Err(Error::MixedTimestamps(self.timestamp, record.timestamp));
        }
        let v = &record.released;
        if v.appliance_count() != self.appliance_count || v.level_count() != self.level_count {
            return Err(Error::LengthMismatch {
                expected: self.appliance_count * self.level_count,
                actual: v.len(),
            });
        }
        match record.release_epsilon {
            None => self.placeholders += 1,
            Some(eps) => self
                .groups
                .entry(eps.to_bits())
                .or_insert_with(|| BitSums::new(self.appliance_count, self.level_count))
                .add(v)?,
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &RoundAccumulator) -> Result<()> {
        if other.timestamp != self.timestamp {
            return Err(Error::MixedTimestamps(self.timestamp, other.timestamp));
        }
        for (key, sums) in &other.groups {
            match self.groups.get_mut(key) {
                Some(mine) => mine.merge(sums)?,
                None => {
                    self.groups.insert(*key, sums.clone());
                }
            }
        }
        self.placeholders += other.placeholders;
        Ok(())
    }

    pub fn users(&self) -> u64 {
        self.placeholders + self.groups.values().map(BitSums::users).sum::<u64>()
    }

    /// Sum of the per-budget estimates.
    pub fn estimate(&self, mode: EstimatorMode) -> Result<EstimatedHistogram> {
        if self.users() == 0 {
            return Err(Error::EmptyRound);
        }
        let mut total = EstimatedHistogram::zeros(self.timestamp, self.appliance_count, self.level_count);
        for (key, sums) in &self.groups {
            let params = oue_probabilities(f64::from_bits(*key), self.appliance_count)?;
            total.add(&estimate_histogram(sums, &params, mode, self.timestamp)?);
        }
        total.user_count = self.users();
        Ok(total)
    }
}

/// Estimates one timestamp from all users' records.
pub fn estimate_round(records: &[ReleaseRecord], mode: EstimatorMode) -> Result<EstimatedHistogram> {
    let t = check_round(records)?;
    let v = &records[0].released;
    let mut acc = RoundAccumulator::new(t, v.appliance_count(), v.level_count());
    for r in records {
        acc.add(r)?;
    }
    acc.estimate(mode)
}

/// Total energy per appliance: clamped counts times level midpoints,
/// summed over levels and timestamps.
pub fn estimate_energy(histograms: &[EstimatedHistogram], scheme: &QuantizationScheme) -> Result<Vec<f64>> {
    let first = histograms
        .first()
        .ok_or_else(|| Error::InvalidParameter("no histograms to convert".into()))?;
    let (n, d) = (first.appliance_count, first.level_count);
    if d != scheme.level_count() {
        return Err(Error::InvalidParameter(format!(
            "histograms have {d} levels, scheme has {}",
            scheme.level_count()
        )));
    }
    let midpoints = scheme.midpoints();
    let mut energy = vec![0.0; n];
    for h in histograms {
        if h.appliance_count != n || h.level_count != d {
            return Err(Error::InvalidParameter("histograms disagree on dimensions".into()));
        }
        for (a, e) in energy.iter_mut().enumerate() {
            *e += h
                .appliance(a + 1)
                .iter()
                .zip(&midpoints)
                .map(|(c, m)| c.max(0.0) * m)
                .sum::<f64>();
        }
    }
    Ok(energy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAppliance {
    pub appliance_id: usize,
    pub energy: f64,
}

/// Appliances by descending energy, ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceRanking(pub Vec<RankedAppliance>);

impl ApplianceRanking {
    pub fn from_energies(energies: &[f64]) -> Self {
        let mut entries: Vec<RankedAppliance> = energies
            .iter()
            .enumerate()
            .map(|(i, &energy)| RankedAppliance {
                appliance_id: i + 1,
                energy,
            })
            .collect();
        entries.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.appliance_id.cmp(&b.appliance_id)));
        Self(entries)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.0.iter().map(|r| r.appliance_id).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn top_k(energies: &[f64], k: usize) -> Result<ApplianceRanking> {
    if k > energies.len() {
        return Err(Error::InvalidParameter(format!(
            "top-{k} requested from {} appliances",
            energies.len()
        )));
    }
    let mut ranking = ApplianceRanking::from_energies(energies);
    ranking.0.truncate(k);
    Ok(ranking)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRate {
    pub hits: usize,
    pub k: usize,
    pub rate: f64,
}

/// Positions among the first `k` where both rankings name the same
/// appliance.
pub fn hit_rate(truth: &ApplianceRanking, estimate: &ApplianceRanking, k: usize) -> Result<HitRate> {
    if k == 0 || k > truth.len() || k > estimate.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} with rankings of length {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let hits = truth.0[..k]
        .iter()
        .zip(&estimate.0[..k])
        .filter(|(a, b)| a.appliance_id == b.appliance_id)
        .count();
    Ok(HitRate {
        hits,
        k,
        rate: hits as f64 / k as f64,
    })
}

/// Percentage of the total energy attributed to each appliance.
pub fn impact_shares(energies: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = energies.iter().sum();
    if !(total > 0.0) || energies.iter().any(|e| *e < 0.0) {
        return Err(Error::Degenerate(
            "impact shares need non-negative energies with a positive total".into(),
        ));
    }
    Ok(energies.iter().map(|e| e / total * 100.0).collect())
}
