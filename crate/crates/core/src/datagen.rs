//! Experiment datasets: synthetic families over `[0, max]`, per-household
//! statistics and augmentation, and the CSV exchange format
//! `user_id,day,appliance_id,watts`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{map_roster, ApplianceReading, QuantizationScheme};
use crate::randomizer::{keyed_rng, StreamPurpose};
use crate::special::{normal_cdf, normal_pdf};

pub const CSV_HEADER: [&str; 4] = ["user_id", "day", "appliance_id", "watts"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub user_id: u64,
    /// 0-based day index.
    pub day: u64,
    /// 1-based roster position.
    pub appliance_id: usize,
    pub watts: f64,
}

/// Readings sorted by `(user, day, appliance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<DataRow>,
    appliance_count: usize,
    day_count: u64,
    user_ids: Vec<u64>,
}

impl Dataset {
    /// Validates and sorts rows. The roster size defaults to the largest
    /// appliance id present and the day count to the largest day plus one.
    pub fn from_rows(mut rows: Vec<DataRow>, appliance_count: Option<usize>, day_count: Option<u64>) -> Result<Self> {
        for r in &rows {
            if !(r.watts >= 0.0) || !r.watts.is_finite() {
                return Err(Error::NegativeReading(r.watts));
            }
            if r.appliance_id == 0 {
                return Err(Error::UnknownAppliance {
                    id: 0,
                    roster: appliance_count.unwrap_or(0),
                });
            }
        }
        rows.sort_by_key(|r| (r.user_id, r.day, r.appliance_id));
        if let Some(w) = rows
            .windows(2)
            .find(|w| (w[0].user_id, w[0].day, w[0].appliance_id) == (w[1].user_id, w[1].day, w[1].appliance_id))
        {
            return Err(Error::DuplicateAppliance(w[0].appliance_id));
        }
        let max_appliance = rows.iter().map(|r| r.appliance_id).max().unwrap_or(0);
        let appliance_count = appliance_count.unwrap_or(max_appliance);
        if max_appliance > appliance_count {
            return Err(Error::UnknownAppliance {
                id: max_appliance,
                roster: appliance_count,
            });
        }
        let max_day = rows.iter().map(|r| r.day + 1).max().unwrap_or(0);
        let day_count = day_count.unwrap_or(max_day);
        if max_day > day_count {
            return Err(Error::InvalidParameter(format!(
                "row on day {} beyond day count {day_count}",
                max_day - 1
            )));
        }
        let mut user_ids: Vec<u64> = rows.iter().map(|r| r.user_id).collect();
        user_ids.dedup();
        Ok(Self {
            rows,
            appliance_count,
            day_count,
            user_ids,
        })
    }

    pub fn rows(&self) -> &[DataRow] {
        &self.rows
    }

    pub fn appliance_count(&self) -> usize {
        self.appliance_count
    }

    pub fn day_count(&self) -> u64 {
        self.day_count
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    /// Rows of each user, in user id order.
    pub fn users(&self) -> impl Iterator<Item = (u64, &[DataRow])> {
        self.rows
            .chunk_by(|a, b| a.user_id == b.user_id)
            .map(|chunk| (chunk[0].user_id, chunk))
    }

    /// Total true energy per appliance over every user and day.
    pub fn true_energy(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.appliance_count];
        for r in &self.rows {
            totals[r.appliance_id - 1] += r.watts;
        }
        totals
    }

    /// True level counts per day, laid out `[appliance][level - 1]`. Missing
    /// readings count as level 1, as the client reports them.
    pub fn true_level_counts(&self, scheme: &QuantizationScheme) -> Result<Vec<Vec<u64>>> {
        let n = self.appliance_count;
        let d = scheme.level_count();
        let mut counts = vec![vec![0u64; n * d]; self.day_count as usize];
        for (_, rows) in self.users() {
            let mut day_rows = rows.chunk_by(|a, b| a.day == b.day).peekable();
            for day in 0..self.day_count {
                let readings: Vec<ApplianceReading> = match day_rows.peek() {
                    Some(chunk) if chunk[0].day == day => day_rows
                        .next()
                        .unwrap()
                        .iter()
                        .map(|r| ApplianceReading::new(r.appliance_id, r.watts))
                        .collect(),
                    _ => Vec::new(),
                };
                let levels = map_roster(&readings, scheme, n)?;
                for (a, level) in levels.into_iter().enumerate() {
                    counts[day as usize][a * d + level - 1] += 1;
                }
            }
        }
        Ok(counts)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let map_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CSV_HEADER).map_err(map_err)?;
        for r in &self.rows {
            w.write_record(&[
                r.user_id.to_string(),
                r.day.to_string(),
                r.appliance_id.to_string(),
                format_watts(r.watts),
            ])
            .map_err(map_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_watts(w: f64) -> String {
    // shortest representation that round-trips
    format!("{w}")
}

pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

/// Parses the CSV schema. Errors carry 1-based line numbers.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::Csv {
                line: 1,
                message: "missing header".into(),
            })
        }
        Some(h) => h.map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?,
    };
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Csv { line, message };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", record.len())));
        }
        let user_id = record[0]
            .parse::<u64>()
            .map_err(|e| bad(format!("user_id `{}`: {e}", &record[0])))?;
        let day = record[1]
            .parse::<u64>()
            .map_err(|e| bad(format!("day `{}`: {e}", &record[1])))?;
        let appliance_id = record[2]
            .parse::<usize>()
            .map_err(|e| bad(format!("appliance_id `{}`: {e}", &record[2])))?;
        if appliance_id == 0 {
            return Err(bad("appliance_id is 1-based".into()));
        }
        let watts = record[3]
            .parse::<f64>()
            .map_err(|e| bad(format!("watts `{}`: {e}", &record[3])))?;
        if !(watts >= 0.0) || !watts.is_finite() {
            return Err(bad(format!("watts must be a non-negative number, got {watts}")));
        }
        rows.push(DataRow {
            user_id,
            day,
            appliance_id,
            watts,
        });
    }
    Dataset::from_rows(rows, None, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticDistribution {
    Uniform,
    Normal,
    SkewLeft,
    SkewRight,
}

impl SyntheticDistribution {
    pub const ALL: [SyntheticDistribution; 4] = [
        SyntheticDistribution::Uniform,
        SyntheticDistribution::Normal,
        SyntheticDistribution::SkewLeft,
        SyntheticDistribution::SkewRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticDistribution::Uniform => "uniform",
            SyntheticDistribution::Normal => "normal",
            SyntheticDistribution::SkewLeft => "skew_left",
            SyntheticDistribution::SkewRight => "skew_right",
        }
    }
}

impl fmt::Display for SyntheticDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "normal" => Ok(Self::Normal),
            "skew_left" | "left" => Ok(Self::SkewLeft),
            "skew_right" | "right" => Ok(Self::SkewRight),
            _ => Err(Error::Unknown {
                kind: "distribution",
                name: s.to_string(),
            }),
        }
    }
}

/// Shape parameters of the synthetic families, as fractions of `max_energy`
/// where applicable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub max_energy: f64,
    /// Normal family: mean and standard deviation as fractions of max.
    pub normal_mean: f64,
    pub normal_std: f64,
    /// Skewed families: log-normal median as a fraction of max, and the
    /// log-scale spread.
    pub skew_median: f64,
    pub skew_sigma: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            max_energy: 3000.0,
            normal_mean: 0.5,
            normal_std: 1.0 / 6.0,
            skew_median: 0.25,
            skew_sigma: 0.6,
        }
    }
}

enum Sampler {
    Uniform(f64),
    Normal(Normal<f64>, f64),
    Skew(LogNormal<f64>, f64, bool),
}

impl Sampler {
    fn new(dist: SyntheticDistribution, params: &SyntheticParams) -> Result<Self> {
        let max = params.max_energy;
        if !(max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max energy must be positive, got {max}"
            )));
        }
        let bad = |e: &dyn fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match dist {
            SyntheticDistribution::Uniform => Sampler::Uniform(max),
            SyntheticDistribution::Normal => Sampler::Normal(
                Normal::new(params.normal_mean * max, params.normal_std * max).map_err(|e| bad(&e))?,
                max,
            ),
            SyntheticDistribution::SkewLeft | SyntheticDistribution::SkewRight => Sampler::Skew(
                LogNormal::new((params.skew_median * max).ln(), params.skew_sigma).map_err(|e| bad(&e))?,
                max,
                dist == SyntheticDistribution::SkewLeft,
            ),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Uniform(max) => rng.random_range(0.0..=*max),
            Sampler::Normal(n, max) => n.sample(rng).clamp(0.0, *max),
            Sampler::Skew(ln, max, reflect) => {
                // truncate by rejection, clamp if the tail keeps missing
                let mut v = ln.sample(rng);
                for _ in 0..32 {
                    if v <= *max {
                        break;
                    }
                    v = ln.sample(rng);
                }
                let v = v.clamp(0.0, *max);
                if *reflect {
                    max - v
                } else {
                    v
                }
            }
        }
    }
}

/// Independent draws from one family for every `(user, day, appliance)`.
pub fn gen_synthetic(
    distribution: SyntheticDistribution,
    users: usize,
    appliances: usize,
    days: u64,
    seed: u64,
    params: &SyntheticParams,
) -> Result<Dataset> {
    if users == 0 || appliances == 0 || days == 0 {
        return Err(Error::InvalidParameter(
            "users, appliances and days must all be >= 1".into(),
        ));
    }
    let sampler = Sampler::new(distribution, params)?;
    let rows: Vec<DataRow> = (0..users as u64)
        .into_par_iter()
        .flat_map_iter(|user| {
            let sampler = &sampler;
            (0..days).flat_map(move |day| {
                let mut rng = keyed_rng(seed, user, day, StreamPurpose::Data);
                (1..=appliances)
                    .map(|appliance_id| DataRow {
                        user_id: user,
                        day,
                        appliance_id,
                        watts: sampler.sample(&mut rng),
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    Dataset::from_rows(rows, Some(appliances), Some(days))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApplianceStat {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ApplianceStat {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= mean && mean <= upper) || !(std >= 0.0) || lower < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inconsistent appliance statistics: mean {mean}, std {std}, bounds [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            mean,
            std,
            lower,
            upper,
        })
    }
}

/// Per-household (archetype) and per-appliance consumption statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceStats {
    /// `archetypes[h][a]` for household `h` and appliance `a + 1`.
    pub archetypes: Vec<Vec<ApplianceStat>>,
}

impl ApplianceStats {
    pub fn archetype_count(&self) -> usize {
        self.archetypes.len()
    }

    pub fn appliance_count(&self) -> usize {
        self.archetypes.first().map_or(0, Vec::len)
    }
}

/// Empirical mean, population standard deviation and range for every
/// `(user, appliance)` pair of a seed dataset.
pub fn derive_stats(seed: &Dataset) -> Result<ApplianceStats> {
    let n = seed.appliance_count();
    if seed.user_count() == 0 || n == 0 {
        return Err(Error::InvalidParameter("seed dataset is empty".into()));
    }
    let mut archetypes = Vec::with_capacity(seed.user_count());
    for (user, rows) in seed.users() {
        let mut per_appliance: Vec<Vec<f64>> = vec![Vec::new(); n];
        for r in rows {
            per_appliance[r.appliance_id - 1].push(r.watts);
        }
        let stats = per_appliance
            .iter()
            .enumerate()
            .map(|(a, values)| {
                if values.is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "user {user} has no readings for appliance {}",
                        a + 1
                    )));
                }
                let len = values.len() as f64;
                let mean = values.iter().sum::<f64>() / len;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
                let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
                let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(ApplianceStat {
                    mean: mean.clamp(lower, upper),
                    std: var.sqrt(),
                    lower,
                    upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        archetypes.push(stats);
    }
    Ok(ApplianceStats { archetypes })
}

/// Mean of a normal with location `loc` and scale `scale` truncated to
/// `[lower, upper]`.
fn truncated_normal_mean(loc: f64, scale: f64, lower: f64, upper: f64) -> f64 {
    let alpha = (lower - loc) / scale;
    let beta = (upper - loc) / scale;
    let z = normal_cdf(beta) - normal_cdf(alpha);
    if z < 1e-12 {
        return if loc < lower { lower } else { upper };
    }
    (loc + scale * (normal_pdf(alpha) - normal_pdf(beta)) / z).clamp(lower, upper)
}

/// Truncated normal whose truncated mean equals the requested mean.
#[derive(Debug, Clone, Copy)]
struct TruncatedNormal {
    loc: f64,
    scale: f64,
    lower: f64,
    upper: f64,
}

impl TruncatedNormal {
    fn matching(stat: &ApplianceStat) -> Option<Self> {
        if stat.std == 0.0 || stat.upper <= stat.lower {
            return None;
        }
        let (scale, lower, upper) = (stat.std, stat.lower, stat.upper);
        // the truncated mean is increasing in the location
        let mut lo = lower - 8.0 * scale;
        let mut hi = upper + 8.0 * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if truncated_normal_mean(mid, scale, lower, upper) < stat.mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(Self {
            loc: 0.5 * (lo + hi),
            scale,
            lower,
            upper,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.loc, self.scale).expect("positive scale");
        for _ in 0..10_000 {
            let v = normal.sample(rng);
            if v >= self.lower && v <= self.upper {
                return v;
            }
        }
        log::warn!(
            "truncated normal rejection exhausted (loc {}, bounds [{}, {}]); clamping",
            self.loc,
            self.lower,
            self.upper
        );
        normal.sample(rng).clamp(self.lower, self.upper)
    }
}

/// Synthesizes `target_users` users over `days` days. User `u` follows
/// archetype `u mod archetypes` and draws each daily reading from a
/// truncated normal with the archetype's bounds and spread, located so its
/// mean matches the archetype mean.
pub fn augment(stats: &ApplianceStats, target_users: usize, days: u64, seed: u64) -> Result<Dataset> {
    let archetypes = stats.archetype_count();
    let n = stats.appliance_count();
    if archetypes == 0 || n == 0 {
        return Err(Error::InvalidParameter("no archetypes to augment from".into()));
    }
    if target_users < archetypes {
        return Err(Error::InvalidParameter(format!(
            "target users {target_users} below archetype count {archetypes}"
        )));
    }
    if days == 0 {
        return Err(Error::InvalidParameter("days must be >= 1".into()));
    }
    if stats.archetypes.iter().any(|a| a.len() != n) {
        return Err(Error::InvalidParameter(
            "archetypes disagree on the appliance count".into(),
        ));
    }
    let samplers: Vec<Vec<Option<TruncatedNormal>>> = stats
        .archetypes
        .iter()
        .map(|a| a.iter().map(TruncatedNormal::matching).collect())
        .collect();
    let rows: Vec<DataRow> = (0..target_users as u64)
        .into_par_iter()
        .flat_map_iter(|user| {
            let archetype = (user as usize) % archetypes;
            let stat = &stats.archetypes[archetype];
            let sampler = &samplers[archetype];
            (0..days).flat_map(move |day| {
                let mut rng = keyed_rng(seed, user, day, StreamPurpose::Data);
                (0..n)
                    .map(|a| {
                        let watts = match &sampler[a] {
                            Some(tn) => tn.sample(&mut rng),
                            // zero spread or collapsed bounds
                            None => stat[a].mean.clamp(stat[a].lower, stat[a].upper),
                        };
                        DataRow {
                            user_id: user,
                            day,
                            appliance_id: a + 1,
                            watts,
                        }
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    Dataset::from_rows(rows, Some(n), Some(days))
}

/// Number of households in the built-in reference profile.
pub const REFERENCE_HOUSEHOLDS: usize = 39;
/// Appliances per household in the built-in reference profile.
pub const REFERENCE_APPLIANCES: usize = 15;

/// Appliance ids from the largest to the smallest consumer in the
/// reference profile.
pub const REFERENCE_ORDER: [usize; REFERENCE_APPLIANCES] = [7, 6, 2, 1, 12, 9, 3, 14, 11, 8, 15, 4, 13, 10, 5];

/// Built-in seed statistics: 39 households by 15 appliances over
/// `[0, 3000]` W.
///
/// The ten largest appliances sit one 300 W level apart (2850 W down to
/// 285 W) and the other five below 100 W. Households scale the shared
/// pattern by up to 3% and every appliance varies with a 5% coefficient of
/// variation, bounded by `[0, min(2.5 * mean, 3000)]`.
pub fn reference_profile() -> ApplianceStats {
    const TOP: f64 = 2850.0;
    const SPACING: f64 = 285.0;
    const TAIL: [f64; 5] = [80.0, 60.0, 40.0, 25.0, 10.0];
    const HOUSEHOLD_SPREAD: f64 = 0.03;
    const VARIATION: f64 = 0.05;
    let mut base = [0.0; REFERENCE_APPLIANCES];
    for (rank, &id) in REFERENCE_ORDER.iter().enumerate() {
        base[id - 1] = if rank < 10 {
            TOP - SPACING * rank as f64
        } else {
            TAIL[rank - 10]
        };
    }
    let last = (REFERENCE_HOUSEHOLDS - 1) as f64;
    let archetypes = (0..REFERENCE_HOUSEHOLDS)
        .map(|h| {
            let scale = 1.0 + HOUSEHOLD_SPREAD * (2.0 * h as f64 / last - 1.0);
            base.iter()
                .map(|&m| {
                    let mean = m * scale;
                    ApplianceStat {
                        mean,
                        std: VARIATION * mean,
                        lower: 0.0,
                        upper: (2.5 * mean).min(3000.0),
                    }
                })
                .collect()
        })
        .collect();
    ApplianceStats { archetypes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(user_id: u64, day: u64, appliance_id: usize, watts: f64) -> DataRow {
        DataRow {
            user_id,
            day,
            appliance_id,
            watts,
        }
    }

    #[test]
    fn uniform_mean_and_bounds() {
        let ds = gen_synthetic(
            SyntheticDistribution::Uniform,
            1000,
            10,
            100,
            3,
            &SyntheticParams::default(),
        )
        .unwrap();
        assert_eq!(ds.rows().len(), 1_000_000);
        let mean = ds.rows().iter().map(|r| r.watts).sum::<f64>() / 1e6;
        // sd of the mean = 3000 / sqrt(12 * 1e6) ~ 0.87
        assert!((mean - 1500.0).abs() < 5.0, "{mean}");
    }

    #[test]
    fn every_family_stays_in_range_and_is_seeded() {
        for dist in SyntheticDistribution::ALL {
            let p = SyntheticParams::default();
            let a = gen_synthetic(dist, 50, 5, 20, 9, &p).unwrap();
            let b = gen_synthetic(dist, 50, 5, 20, 9, &p).unwrap();
            assert_eq!(a, b);
            assert!(a.rows().iter().all(|r| (0.0..=3000.0).contains(&r.watts)));
            let c = gen_synthetic(dist, 50, 5, 20, 10, &p).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn skew_direction() {
        let p = SyntheticParams::default();
        let mean = |d| {
            let ds = gen_synthetic(d, 200, 5, 20, 1, &p).unwrap();
            ds.rows().iter().map(|r| r.watts).sum::<f64>() / ds.rows().len() as f64
        };
        assert!(mean(SyntheticDistribution::SkewRight) < 1500.0);
        assert!(mean(SyntheticDistribution::SkewLeft) > 1500.0);
    }

    #[test]
    fn unknown_distribution_name() {
        assert!("bimodal".parse::<SyntheticDistribution>().is_err());
        assert_eq!(
            "skew_left".parse::<SyntheticDistribution>().unwrap(),
            SyntheticDistribution::SkewLeft
        );
    }

    #[test]
    fn derive_stats_examples() {
        let ds = Dataset::from_rows(
            vec![
                row(0, 0, 1, 100.0),
                row(0, 1, 1, 100.0),
                row(0, 0, 2, 0.0),
                row(0, 1, 2, 200.0),
            ],
            None,
            None,
        )
        .unwrap();
        let stats = derive_stats(&ds).unwrap();
        assert_eq!(
            stats.archetypes[0][0],
            ApplianceStat::new(100.0, 0.0, 100.0, 100.0).unwrap()
        );
        assert_eq!(
            stats.archetypes[0][1],
            ApplianceStat::new(100.0, 100.0, 0.0, 200.0).unwrap()
        );

        let ds = Dataset::from_rows(vec![row(0, 0, 1, 5.0)], Some(2), None).unwrap();
        assert!(derive_stats(&ds).is_err());
    }

    #[test]
    fn augment_with_zero_spread_reproduces_means() {
        let stats = ApplianceStats {
            archetypes: vec![
                vec![ApplianceStat::new(10.0, 0.0, 10.0, 10.0).unwrap(); 3],
                vec![ApplianceStat::new(250.0, 0.0, 0.0, 900.0).unwrap(); 3],
            ],
        };
        let ds = augment(&stats, 2, 4, 1).unwrap();
        for r in ds.rows() {
            let expected = if r.user_id == 0 { 10.0 } else { 250.0 };
            assert_eq!(r.watts, expected);
        }
        assert!(augment(&stats, 1, 4, 1).is_err());
    }

    #[test]
    fn augment_preserves_archetype_means() {
        let archetypes: Vec<Vec<ApplianceStat>> = (0..39)
            .map(|h| {
                (0..15)
                    .map(|a| {
                        let mean = 40.0 + 60.0 * a as f64 + 5.0 * h as f64;
                        ApplianceStat::new(mean, 0.4 * mean, 0.0, (3.0 * mean).min(3000.0)).unwrap()
                    })
                    .collect()
            })
            .collect();
        let stats = ApplianceStats { archetypes };
        let ds = augment(&stats, 1000, 30, 77).unwrap();
        assert_eq!(ds.user_count(), 1000);
        let derived = derive_stats(&ds).unwrap();
        // pool the synthetic users of each archetype
        for h in 0..39 {
            for a in 0..15 {
                let members: Vec<f64> = (h..1000).step_by(39).map(|u| derived.archetypes[u][a].mean).collect();
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                let target = stats.archetypes[h][a].mean;
                assert!((mean - target).abs() < 0.05 * target, "h={h} a={a}: {mean} vs {target}");
            }
        }
        assert_eq!(ds, augment(&stats, 1000, 30, 77).unwrap());
    }

    #[test]
    fn reference_profile_shape() {
        let stats = reference_profile();
        assert_eq!(stats.archetype_count(), 39);
        assert_eq!(stats.appliance_count(), 15);
        for household in &stats.archetypes {
            for s in household {
                ApplianceStat::new(s.mean, s.std, s.lower, s.upper).unwrap();
                assert!(s.upper <= 3000.0);
            }
            let means: Vec<f64> = household.iter().map(|s| s.mean).collect();
            let ranked: Vec<usize> = crate::aggregator::ApplianceRanking::from_energies(&means).ids();
            assert_eq!(ranked, REFERENCE_ORDER);
        }
    }

    #[test]
    fn truncated_mean_matching() {
        let stat = ApplianceStat::new(50.0, 100.0, 0.0, 400.0).unwrap();
        let tn = TruncatedNormal::matching(&stat).unwrap();
        let m = truncated_normal_mean(tn.loc, tn.scale, tn.lower, tn.upper);
        assert!((m - 50.0).abs() < 1e-6);
        assert!(tn.loc < 50.0);

        let mut rng = keyed_rng(4, 0, 0, StreamPurpose::Data);
        let draws = 1_000_000;
        let sum: f64 = (0..draws).map(|_| tn.sample(&mut rng)).sum();
        // truncated sd is below 100, so the standard error is below 0.1
        assert!((sum / draws as f64 - 50.0).abs() < 0.4);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let ds = gen_synthetic(SyntheticDistribution::Normal, 3, 2, 2, 5, &SyntheticParams::default()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.rows().len(), 12);

        let text = "user_id,day,appliance_id,watts\n0,0,1,5\n0,1,1,-5\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "0,0,1,5\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(read_csv("".as_bytes()), Err(Error::Csv { line: 1, .. })));
        let text = "user_id,day,appliance_id,watts\n0,zero,1,5\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::Csv { line: 2, .. })));
    }

    #[test]
    fn true_level_counts_fill_gaps_with_level_one() {
        let scheme = QuantizationScheme::equal_width(3, 300.0).unwrap();
        let ds = Dataset::from_rows(
            vec![row(0, 0, 1, 250.0), row(1, 0, 2, 150.0), row(1, 1, 1, 50.0)],
            Some(2),
            Some(2),
        )
        .unwrap();
        let counts = ds.true_level_counts(&scheme).unwrap();
        assert_eq!(counts[0], vec![1, 0, 1, 1, 1, 0]);
        assert_eq!(counts[1], vec![2, 0, 0, 2, 0, 0]);
        assert_eq!(ds.true_energy(), vec![300.0, 150.0]);
    }
}
