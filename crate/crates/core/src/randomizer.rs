//! Optimized unary encoding perturbation of the combined vector.
//!
//! The combined vector of `n` one-hot blocks has Hamming sensitivity `2n`,
//! so the flip probability of a zero bit is `q = 1 / (1 + e^(eps/n))` while
//! a set bit survives with probability `p = 1/2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{decode_block, EncodedVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub epsilon: f64,
    pub appliance_count: usize,
    /// Probability that a set bit stays set.
    pub p: f64,
    /// Probability that a clear bit becomes set.
    pub q: f64,
}

impl PerturbationParams {
    /// Arbitrary `(p, q)` pair. `epsilon` is the budget the pair implies for
    /// `appliance_count` blocks (infinite when `q == 0` or `p == 1`).
    pub fn with_probabilities(p: f64, q: f64, appliance_count: usize) -> Result<Self> {
        if appliance_count == 0 {
            return Err(Error::InvalidParameter("appliance count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "probabilities must lie in [0, 1], got p={p}, q={q}"
            )));
        }
        let per_block = (p * (1.0 - q)) / (q * (1.0 - p));
        Ok(Self {
            epsilon: appliance_count as f64 * per_block.ln(),
            appliance_count,
            p,
            q,
        })
    }

    pub fn bit_probability(&self, input: bool) -> f64 {
        if input {
            self.p
        } else {
            self.q
        }
    }
}

pub fn oue_probabilities(epsilon: f64, appliance_count: usize) -> Result<PerturbationParams> {
    if appliance_count == 0 {
        return Err(Error::InvalidParameter("appliance count must be >= 1".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    // sensitivity 2n, exponent eps / (2n / 2)
    let q = 1.0 / (1.0 + (epsilon / appliance_count as f64).exp());
    Ok(PerturbationParams {
        epsilon,
        appliance_count,
        p: 0.5,
        q,
    })
}

/// Classic unary encoding for a single block of sensitivity 2. Only used to
/// contrast against OUE.
pub fn ue_probabilities(epsilon: f64) -> Result<PerturbationParams> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let e = (epsilon / 2.0).exp();
    Ok(PerturbationParams {
        epsilon,
        appliance_count: 1,
        p: e / (1.0 + e),
        q: 1.0 / (1.0 + e),
    })
}

pub fn perturb<R: Rng + ?Sized>(
    vector: &EncodedVector,
    params: &PerturbationParams,
    rng: &mut R,
) -> Result<EncodedVector> {
    let expected = params.appliance_count * vector.level_count();
    if vector.appliance_count() != params.appliance_count || vector.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: vector.len(),
        });
    }
    let mut out = vector.clone();
    for bit in out.bits_mut() {
        let threshold = if *bit { params.p } else { params.q };
        *bit = rng.random::<f64>() < threshold;
    }
    Ok(out)
}

/// Exact `max_B Pr[B | b1] / Pr[B | b2]` by enumerating every output.
pub fn likelihood_ratio_bound(b1: &EncodedVector, b2: &EncodedVector, params: &PerturbationParams) -> Result<f64> {
    if b1.len() != b2.len() {
        return Err(Error::LengthMismatch {
            expected: b1.len(),
            actual: b2.len(),
        });
    }
    let m = b1.len();
    if m > 16 {
        return Err(Error::EnumerationTooLarge(m));
    }
    for v in [b1, b2] {
        if v.decode_levels().iter().any(Option::is_none) {
            return Err(Error::InvalidParameter(
                "inputs must be valid encodings with one set bit per block".into(),
            ));
        }
    }
    let prob = |input: &[bool], output: u32| -> f64 {
        input
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let one = params.bit_probability(x);
                if output >> i & 1 == 1 {
                    one
                } else {
                    1.0 - one
                }
            })
            .product()
    };
    let mut best = 0.0f64;
    for output in 0..(1u32 << m) {
        let num = prob(b1.bits(), output);
        let den = prob(b2.bits(), output);
        let ratio = if den == 0.0 {
            if num == 0.0 {
                continue;
            }
            f64::INFINITY
        } else {
            num / den
        };
        best = best.max(ratio);
    }
    Ok(best)
}

/// Every valid encoding with `n` blocks of `d` bits.
pub fn all_encodings(appliance_count: usize, level_count: usize) -> Vec<EncodedVector> {
    let total = level_count.pow(appliance_count as u32);
    (0..total)
        .map(|mut idx| {
            let mut levels = Vec::with_capacity(appliance_count);
            for _ in 0..appliance_count {
                levels.push(idx % level_count + 1);
                idx /= level_count;
            }
            crate::quantizer::encode_levels(&levels, level_count).expect("levels in range")
        })
        .collect()
}

/// Number of blocks in which two valid encodings disagree.
pub fn differing_blocks(b1: &EncodedVector, b2: &EncodedVector) -> usize {
    (1..=b1.appliance_count())
        .filter(|&a| decode_block(b1.block(a)) != decode_block(b2.block(a)))
        .count()
}

/// Purpose tag that separates the random streams a user consumes at one
/// timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Dissimilarity,
    Publication,
    Sampling,
    Benchmark,
    Data,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Dissimilarity => 1,
            StreamPurpose::Publication => 2,
            StreamPurpose::Sampling => 3,
            StreamPurpose::Benchmark => 4,
            StreamPurpose::Data => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Independent generator for `(master seed, user, timestamp, purpose)`.
///
/// The key comes from the master seed and the ChaCha stream id from the
/// remaining coordinates, so streams do not depend on call order.
pub fn keyed_rng(master_seed: u64, user_id: u64, timestamp: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = master_seed;
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let stream = derive_seed(derive_seed(user_id, timestamp), purpose.tag());
    rng.set_stream(stream);
    rng
}
