//! Adaptive division of a w-event budget over an unbounded stream.
//!
//! Four methods are supported:
//!
//! * `Lbu` spends `eps / w` on every timestamp.
//! * `Lsp` spends the whole `eps` on one sampling timestamp per block of `w`
//!   and re-releases that output in between.
//! * `Lbd` spends `eps / (2w)` per timestamp on a private dissimilarity
//!   measurement and offers half of the remaining publication budget to a
//!   candidate release.
//! * `Lba` shares the dissimilarity half with `Lbd` but hands out publication
//!   budget in uniform slots of `eps / (2w)`. A publication absorbs the slots
//!   of skipped timestamps and nullifies as many following timestamps.
//!
//! Timestamps inside a scheduler are 1-based stream positions.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::EncodedVector;
use crate::randomizer::StreamPurpose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Lbu,
    Lsp,
    Lbd,
    Lba,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::Lbu,
        SchedulerKind::Lsp,
        SchedulerKind::Lbd,
        SchedulerKind::Lba,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Lbu => "lbu",
            SchedulerKind::Lsp => "lsp",
            SchedulerKind::Lbd => "lbd",
            SchedulerKind::Lba => "lba",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbu" => Ok(SchedulerKind::Lbu),
            "lsp" => Ok(SchedulerKind::Lsp),
            "lbd" => Ok(SchedulerKind::Lbd),
            "lba" => Ok(SchedulerKind::Lba),
            _ => Err(Error::Unknown {
                kind: "scheduler",
                name: s.to_string(),
            }),
        }
    }
}

/// How `dis` and `err` compare two bit vectors. On binary vectors the two
/// forms coincide; the switch exists for sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissimilarityForm {
    #[default]
    Squared,
    Absolute,
}

/// Where the LSP sampling timestamp falls inside each block of `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LspSampling {
    /// First timestamp of every block.
    #[default]
    First,
    /// One seeded offset per stream, kept for every block.
    SeededPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Publish,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub epsilon: f64,
    pub window: usize,
    #[serde(default)]
    pub dissimilarity_form: DissimilarityForm,
    #[serde(default)]
    pub lsp_sampling: LspSampling,
}

impl SchedulerConfig {
    pub fn new(kind: SchedulerKind, epsilon: f64, window: usize) -> Self {
        Self {
            kind,
            epsilon,
            window,
            dissimilarity_form: DissimilarityForm::Squared,
            lsp_sampling: LspSampling::First,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window size must be >= 1".into()));
        }
        Ok(())
    }

    /// One uniform slot `eps / (2w)`.
    pub fn slot_budget(&self) -> f64 {
        self.epsilon / (2.0 * self.window as f64)
    }
}

/// Budgets spent at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub t: u64,
    pub dissimilarity: f64,
    pub publication: f64,
}

impl BudgetEntry {
    pub fn total(&self) -> f64 {
        self.dissimilarity + self.publication
    }
}

/// Sum of both budgets over `[t - w + 1, t]`; absent timestamps count as 0.
pub fn window_spent<'a, I>(entries: I, t: u64, window: usize) -> f64
where
    I: IntoIterator<Item = &'a BudgetEntry>,
{
    let start = (t + 1).saturating_sub(window as u64);
    entries
        .into_iter()
        .filter(|e| e.t >= start && e.t <= t)
        .map(BudgetEntry::total)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Publication {
    t: u64,
    budget: f64,
    /// Uniform slots absorbed (LBA only, 1 elsewhere).
    slots: u64,
}

/// Per-user budget state for the last `w` timestamps.
#[derive(Debug, Clone)]
pub struct WindowLedger {
    window: usize,
    entries: VecDeque<BudgetEntry>,
    last_t: u64,
    last_publication: Option<Publication>,
    last_release: EncodedVector,
    last_release_epsilon: Option<f64>,
}

impl WindowLedger {
    pub fn new(window: usize, appliance_count: usize, level_count: usize) -> Self {
        Self {
            window,
            entries: VecDeque::with_capacity(window + 1),
            last_t: 0,
            last_publication: None,
            last_release: EncodedVector::zeros(appliance_count, level_count),
            last_release_epsilon: None,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &BudgetEntry> {
        self.entries.iter()
    }

    /// Last processed timestamp, 0 before the first step.
    pub fn last_timestamp(&self) -> u64 {
        self.last_t
    }

    pub fn last_release(&self) -> &EncodedVector {
        &self.last_release
    }

    pub fn last_publication_timestamp(&self) -> Option<u64> {
        self.last_publication.map(|p| p.t)
    }

    pub fn last_publication_budget(&self) -> Option<f64> {
        self.last_publication.map(|p| p.budget)
    }

    pub fn window_spent(&self, t: u64) -> f64 {
        window_spent(self.entries.iter(), t, self.window)
    }

    /// Publication budget spent over `[t - w + 1, t - 1]`.
    fn recent_publication(&self, t: u64) -> f64 {
        let start = (t + 1).saturating_sub(self.window as u64);
        self.entries
            .iter()
            .filter(|e| e.t >= start && e.t < t)
            .map(|e| e.publication)
            .sum()
    }

    fn record(&mut self, entry: BudgetEntry) {
        self.last_t = entry.t;
        self.entries.push_back(entry);
        let start = (entry.t + 1).saturating_sub(self.window as u64);
        while self.entries.front().is_some_and(|e| e.t < start) {
            self.entries.pop_front();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerDecision {
    pub t: u64,
    pub strategy: Strategy,
    /// `eps_{t,1}` spent on the private dissimilarity measurement.
    pub dissimilarity_budget: f64,
    /// `eps_{t,2}` consumed by this timestamp; 0 under approximation.
    pub publication_budget: f64,
    /// Vector released at this timestamp.
    pub release: EncodedVector,
    /// Budget the released vector was perturbed with. `None` only for the
    /// placeholder released before any publication exists.
    pub release_epsilon: Option<f64>,
    pub dissimilarity: Option<f64>,
    pub error: Option<f64>,
    /// LBA timestamp forced to approximate after an absorbing publication.
    pub nullified: bool,
}

pub fn dissimilarity(v1: &EncodedVector, v2: &EncodedVector) -> Result<f64> {
    dissimilarity_with(v1, v2, DissimilarityForm::Squared)
}

/// Mean per-position distance over the full combined length.
pub fn dissimilarity_with(v1: &EncodedVector, v2: &EncodedVector, form: DissimilarityForm) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(Error::LengthMismatch {
            expected: v1.len(),
            actual: v2.len(),
        });
    }
    if v1.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = v1
        .bits()
        .iter()
        .zip(v2.bits())
        .map(|(&a, &b)| {
            let diff = a as u8 as f64 - b as u8 as f64;
            match form {
                DissimilarityForm::Squared => diff * diff,
                DissimilarityForm::Absolute => diff.abs(),
            }
        })
        .sum();
    Ok(total / v1.len() as f64)
}

/// A stateful budget scheduler for one user stream.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    ledger: WindowLedger,
    lsp_phase: u64,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, appliance_count: usize, level_count: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ledger: WindowLedger::new(config.window, appliance_count, level_count),
            lsp_phase: 0,
        })
    }

    /// Scheduler whose LSP sampling offset is drawn from `seed` when the
    /// config asks for a seeded phase.
    pub fn with_seed(config: SchedulerConfig, appliance_count: usize, level_count: usize, seed: u64) -> Result<Self> {
        let mut s = Self::new(config, appliance_count, level_count)?;
        if config.lsp_sampling == LspSampling::SeededPhase {
            s.lsp_phase = crate::randomizer::derive_seed(seed, 0x15b) % config.window as u64;
        }
        Ok(s)
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn ledger(&self) -> &WindowLedger {
        &self.ledger
    }

    /// Whether stream position `t` is an LSP sampling timestamp.
    pub fn is_sampling_timestamp(&self, t: u64) -> bool {
        (t - 1) % self.config.window as u64 == self.lsp_phase
    }

    /// Advances one timestamp. `perturb` produces a perturbation of its
    /// argument at the given budget; the decision between publishing and
    /// approximating is `dis > err`.
    pub fn step<P>(&mut self, current: &EncodedVector, perturb: P) -> Result<SchedulerDecision>
    where
        P: FnMut(&EncodedVector, f64, StreamPurpose) -> Result<EncodedVector>,
    {
        self.step_with(current, perturb, |dis, err| dis > err)
    }

    /// As [`Scheduler::step`] with a caller-supplied publish rule for the
    /// LBD/LBA branches. The rule is bypassed for the first publication and
    /// for nullified timestamps.
    pub fn step_with<P, D>(
        &mut self,
        current: &EncodedVector,
        mut perturb: P,
        mut decide: D,
    ) -> Result<SchedulerDecision>
    where
        P: FnMut(&EncodedVector, f64, StreamPurpose) -> Result<EncodedVector>,
        D: FnMut(f64, f64) -> bool,
    {
        if current.len() != self.ledger.last_release.len() {
            return Err(Error::LengthMismatch {
                expected: self.ledger.last_release.len(),
                actual: current.len(),
            });
        }
        let t = self.ledger.last_t + 1;
        let eps = self.config.epsilon;
        let w = self.config.window;
        match self.config.kind {
            SchedulerKind::Lbu => {
                let budget = eps / w as f64;
                let out = perturb(current, budget, StreamPurpose::Publication)?;
                Ok(self.publish(t, 0.0, budget, 1, out, None, None))
            }
            SchedulerKind::Lsp => {
                if self.is_sampling_timestamp(t) {
                    let out = perturb(current, eps, StreamPurpose::Publication)?;
                    Ok(self.publish(t, 0.0, eps, 1, out, None, None))
                } else {
                    Ok(self.approximate(t, 0.0, None, None, false))
                }
            }
            SchedulerKind::Lbd => {
                let (e1, dis) = self.measure_dissimilarity(current, &mut perturb)?;
                let remaining = eps / 2.0 - self.ledger.recent_publication(t);
                let e2 = remaining / 2.0;
                let candidate = perturb(current, e2, StreamPurpose::Publication)?;
                let err = dissimilarity_with(&candidate, current, self.config.dissimilarity_form)?;
                let first = self.ledger.last_publication.is_none();
                if first || decide(dis, err) {
                    Ok(self.publish(t, e1, e2, 1, candidate, Some(dis), Some(err)))
                } else {
                    Ok(self.approximate(t, e1, Some(dis), Some(err), false))
                }
            }
            SchedulerKind::Lba => {
                let (e1, dis) = self.measure_dissimilarity(current, &mut perturb)?;
                // before any publication, behave as if t = 0 published one slot
                let (l, slots) = self.ledger.last_publication.map_or((0, 1), |p| (p.t, p.slots));
                let nullify = slots - 1;
                if t - l <= nullify {
                    return Ok(self.approximate(t, e1, Some(dis), None, true));
                }
                let absorbable = t - (l + nullify);
                let absorbed = absorbable.min(w as u64);
                let e2 = self.config.slot_budget() * absorbed as f64;
                let candidate = perturb(current, e2, StreamPurpose::Publication)?;
                let err = dissimilarity_with(&candidate, current, self.config.dissimilarity_form)?;
                let first = self.ledger.last_publication.is_none();
                if first || decide(dis, err) {
                    Ok(self.publish(t, e1, e2, absorbed, candidate, Some(dis), Some(err)))
                } else {
                    Ok(self.approximate(t, e1, Some(dis), Some(err), false))
                }
            }
        }
    }

    fn measure_dissimilarity<P>(&self, current: &EncodedVector, perturb: &mut P) -> Result<(f64, f64)>
    where
        P: FnMut(&EncodedVector, f64, StreamPurpose) -> Result<EncodedVector>,
    {
        let e1 = self.config.slot_budget();
        let noisy = perturb(current, e1, StreamPurpose::Dissimilarity)?;
        let dis = dissimilarity_with(&noisy, &self.ledger.last_release, self.config.dissimilarity_form)?;
        Ok((e1, dis))
    }

    #[allow(clippy::too_many_arguments)]
    fn publish(
        &mut self,
        t: u64,
        e1: f64,
        e2: f64,
        slots: u64,
        release: EncodedVector,
        dis: Option<f64>,
        err: Option<f64>,
    ) -> SchedulerDecision {
        self.ledger.record(BudgetEntry {
            t,
            dissimilarity: e1,
            publication: e2,
        });
        self.ledger.last_publication = Some(Publication { t, budget: e2, slots });
        self.ledger.last_release = release.clone();
        self.ledger.last_release_epsilon = Some(e2);
        SchedulerDecision {
            t,
            strategy: Strategy::Publish,
            dissimilarity_budget: e1,
            publication_budget: e2,
            release,
            release_epsilon: Some(e2),
            dissimilarity: dis,
            error: err,
            nullified: false,
        }
    }

    fn approximate(
        &mut self,
        t: u64,
        e1: f64,
        dis: Option<f64>,
        err: Option<f64>,
        nullified: bool,
    ) -> SchedulerDecision {
        self.ledger.record(BudgetEntry {
            t,
            dissimilarity: e1,
            publication: 0.0,
        });
        SchedulerDecision {
            t,
            strategy: Strategy::Approximate,
            dissimilarity_budget: e1,
            publication_budget: 0.0,
            release: self.ledger.last_release.clone(),
            release_epsilon: self.ledger.last_release_epsilon,
            dissimilarity: dis,
            error: err,
            nullified,
        }
    }
}
