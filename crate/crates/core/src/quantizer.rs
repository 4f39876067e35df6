//! Energy readings to discrete levels, and levels to one-hot bit blocks.
//!
//! A scheme with `d` levels partitions `[0, max]` into half-open ranges
//! `(b_{l-1}, b_l]`. Zero belongs to level 1 and readings above `max` are
//! clamped to level `d`.
//!
//! Inside a block of `d` bits, level `l` sits at index `d - l` counted from
//! the left, so level 1 is the rightmost bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationScheme {
    boundaries: Vec<f64>,
}

impl QuantizationScheme {
    /// Builds a scheme from `level_count` and `max_energy`. Without explicit
    /// boundaries the range is split into equal-width levels.
    pub fn new(level_count: usize, max_energy: f64, explicit_boundaries: Option<&[f64]>) -> Result<Self> {
        if level_count < 2 {
            return Err(Error::InvalidScheme(format!(
                "need at least 2 levels, got {level_count}"
            )));
        }
        if !(max_energy > 0.0) || !max_energy.is_finite() {
            return Err(Error::InvalidScheme(format!(
                "max energy must be positive and finite, got {max_energy}"
            )));
        }
        let boundaries = match explicit_boundaries {
            None => {
                let width = max_energy / level_count as f64;
                let mut b: Vec<f64> = (0..=level_count).map(|i| i as f64 * width).collect();
                b[level_count] = max_energy;
                b
            }
            Some(b) => {
                if b.len() != level_count + 1 {
                    return Err(Error::InvalidScheme(format!(
                        "{} levels need {} boundaries, got {}",
                        level_count,
                        level_count + 1,
                        b.len()
                    )));
                }
                if b[0] != 0.0 {
                    return Err(Error::InvalidScheme(format!("first boundary must be 0, got {}", b[0])));
                }
                if b[level_count] != max_energy {
                    return Err(Error::InvalidScheme(format!(
                        "last boundary must equal max energy {max_energy}, got {}",
                        b[level_count]
                    )));
                }
                if let Some(i) = b.windows(2).position(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidScheme(format!(
                        "boundaries not strictly increasing at index {}: {} then {}",
                        i + 1,
                        b[i],
                        b[i + 1]
                    )));
                }
                b.to_vec()
            }
        };
        Ok(Self { boundaries })
    }

    pub fn equal_width(level_count: usize, max_energy: f64) -> Result<Self> {
        Self::new(level_count, max_energy, None)
    }

    pub fn level_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn max_energy(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Lower and upper boundary of a 1-based level.
    pub fn range(&self, level: usize) -> Result<(f64, f64)> {
        self.check_level(level)?;
        Ok((self.boundaries[level - 1], self.boundaries[level]))
    }

    pub fn midpoint(&self, level: usize) -> Result<f64> {
        let (lo, hi) = self.range(level)?;
        Ok(0.5 * (lo + hi))
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Returns the unique level `l` with `b_{l-1} < value <= b_l`.
    pub fn map_reading(&self, value: f64) -> Result<usize> {
        if value < 0.0 || value.is_nan() {
            return Err(Error::NegativeReading(value));
        }
        let d = self.level_count();
        // count of upper boundaries strictly below the value
        let below = self.boundaries[1..].partition_point(|&b| b < value);
        if below >= d {
            log::warn!(
                "reading {value} W above scheme max {} W, clamped to level {d}",
                self.max_energy()
            );
            return Ok(d);
        }
        Ok(below + 1)
    }

    fn check_level(&self, level: usize) -> Result<()> {
        let d = self.level_count();
        if level == 0 || level > d {
            return Err(Error::LevelOutOfRange { level, levels: d });
        }
        Ok(())
    }
}

/// One appliance's reading at one timestamp. Appliance ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApplianceReading {
    pub appliance_id: usize,
    pub value: f64,
}

impl ApplianceReading {
    pub fn new(appliance_id: usize, value: f64) -> Self {
        Self { appliance_id, value }
    }
}

/// The combined bit vector of one user at one timestamp: `n` blocks of `d`
/// bits, in roster order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedVector {
    bits: Vec<bool>,
    appliance_count: usize,
    level_count: usize,
}

impl EncodedVector {
    pub fn zeros(appliance_count: usize, level_count: usize) -> Self {
        Self {
            bits: vec![false; appliance_count * level_count],
            appliance_count,
            level_count,
        }
    }

    pub fn from_bits(bits: Vec<bool>, appliance_count: usize, level_count: usize) -> Result<Self> {
        let expected = appliance_count * level_count;
        if bits.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: bits.len(),
            });
        }
        Ok(Self {
            bits,
            appliance_count,
            level_count,
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn appliance_count(&self) -> usize {
        self.appliance_count
    }

    pub fn level_count(&self) -> usize {
        self.level_count
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bits of one appliance (1-based id).
    pub fn block(&self, appliance_id: usize) -> &[bool] {
        let d = self.level_count;
        &self.bits[(appliance_id - 1) * d..appliance_id * d]
    }

    /// Levels present in each block, assuming exactly one bit per block is
    /// set. Returns `None` for a block that is not one-hot.
    pub fn decode_levels(&self) -> Vec<Option<usize>> {
        (1..=self.appliance_count)
            .map(|a| decode_block(self.block(a)))
            .collect()
    }

    /// Renders as a `0`/`1` string.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str, appliance_count: usize, level_count: usize) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "unexpected character `{other}` in bit string"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(bits, appliance_count, level_count)
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }
}

/// Bit index of `level` inside a block of `d` bits.
pub fn level_position(level: usize, level_count: usize) -> usize {
    level_count - level
}

/// Level stored at a bit index inside a block of `d` bits.
pub fn position_level(position: usize, level_count: usize) -> usize {
    level_count - position
}

pub fn encode_level(level: usize, level_count: usize) -> Result<Vec<bool>> {
    if level == 0 || level > level_count {
        return Err(Error::LevelOutOfRange {
            level,
            levels: level_count,
        });
    }
    let mut block = vec![false; level_count];
    block[level_position(level, level_count)] = true;
    Ok(block)
}

/// Inverse of [`encode_level`] for one-hot blocks.
pub fn decode_block(block: &[bool]) -> Option<usize> {
    let mut ones = block.iter().enumerate().filter(|(_, &b)| b);
    match (ones.next(), ones.next()) {
        (Some((pos, _)), None) => Some(position_level(pos, block.len())),
        _ => None,
    }
}

/// Encodes a household's readings into the combined vector. Roster appliances
/// missing from `readings` are reported as zero consumption.
pub fn build_combined_vector(
    readings: &[ApplianceReading],
    scheme: &QuantizationScheme,
    roster: usize,
) -> Result<EncodedVector> {
    let levels = map_roster(readings, scheme, roster)?;
    encode_levels(&levels, scheme.level_count())
}

/// Levels for every roster appliance, in roster order.
pub fn map_roster(readings: &[ApplianceReading], scheme: &QuantizationScheme, roster: usize) -> Result<Vec<usize>> {
    let mut levels: Vec<Option<usize>> = vec![None; roster];
    for reading in readings {
        let id = reading.appliance_id;
        if id == 0 || id > roster {
            return Err(Error::UnknownAppliance { id, roster });
        }
        if levels[id - 1].is_some() {
            return Err(Error::DuplicateAppliance(id));
        }
        levels[id - 1] = Some(scheme.map_reading(reading.value)?);
    }
    Ok(levels.into_iter().map(|l| l.unwrap_or(1)).collect())
}

pub fn encode_levels(levels: &[usize], level_count: usize) -> Result<EncodedVector> {
    let mut bits = Vec::with_capacity(levels.len() * level_count);
    for &level in levels {
        bits.extend(encode_level(level, level_count)?);
    }
    EncodedVector::from_bits(bits, levels.len(), level_count)
}
