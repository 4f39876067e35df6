//! Centralised noise mechanisms used as comparison baselines. Each perturbs
//! one numeric reading.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkMechanism {
    Laplace,
    Gaussian,
    Gamma,
    ExponentialMech,
}

impl BenchmarkMechanism {
    pub const ALL: [BenchmarkMechanism; 4] = [
        BenchmarkMechanism::Laplace,
        BenchmarkMechanism::Gamma,
        BenchmarkMechanism::Gaussian,
        BenchmarkMechanism::ExponentialMech,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkMechanism::Laplace => "laplace",
            BenchmarkMechanism::Gaussian => "gaussian",
            BenchmarkMechanism::Gamma => "gamma",
            BenchmarkMechanism::ExponentialMech => "exponential_mech",
        }
    }
}

impl fmt::Display for BenchmarkMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Self::Laplace),
            "gaussian" => Ok(Self::Gaussian),
            "gamma" => Ok(Self::Gamma),
            "exponential_mech" | "exponential" => Ok(Self::ExponentialMech),
            _ => Err(Error::Unknown {
                kind: "mechanism",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub epsilon: f64,
    pub sensitivity: f64,
    /// Gaussian failure probability.
    pub delta: f64,
    /// Number of contributions whose gamma-difference noise adds up to one
    /// Laplace variate.
    pub gamma_shares: usize,
    /// Candidate outputs of the exponential mechanism.
    pub grid: Vec<f64>,
}

impl NoiseParams {
    pub fn new(epsilon: f64, sensitivity: f64) -> Self {
        Self {
            epsilon,
            sensitivity,
            delta: 1e-5,
            gamma_shares: 1,
            grid: Vec::new(),
        }
    }

    pub fn laplace_scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }

    pub fn gaussian_sigma(&self) -> f64 {
        (2.0 * (1.25 / self.delta).ln()).sqrt() * self.sensitivity / self.epsilon
    }
}

/// Prepared sampler for one mechanism.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    Laplace(f64),
    Gaussian(Normal<f64>),
    Gamma(Gamma<f64>),
    Exponential { grid: Vec<f64>, coefficient: f64 },
}

impl NoiseSampler {
    pub fn new(kind: BenchmarkMechanism, params: &NoiseParams) -> Result<Self> {
        if !(params.epsilon > 0.0) || !(params.sensitivity > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon and sensitivity must be positive, got {} and {}",
                params.epsilon, params.sensitivity
            )));
        }
        let bad = |e: &dyn fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match kind {
            BenchmarkMechanism::Laplace => NoiseSampler::Laplace(params.laplace_scale()),
            BenchmarkMechanism::Gaussian => {
                if !(params.delta > 0.0 && params.delta < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "delta must lie in (0, 1), got {}",
                        params.delta
                    )));
                }
                NoiseSampler::Gaussian(Normal::new(0.0, params.gaussian_sigma()).map_err(|e| bad(&e))?)
            }
            BenchmarkMechanism::Gamma => {
                if params.gamma_shares == 0 {
                    return Err(Error::InvalidParameter("gamma shares must be >= 1".into()));
                }
                NoiseSampler::Gamma(
                    Gamma::new(1.0 / params.gamma_shares as f64, params.laplace_scale()).map_err(|e| bad(&e))?,
                )
            }
            BenchmarkMechanism::ExponentialMech => {
                if params.grid.is_empty() {
                    return Err(Error::InvalidParameter(
                        "exponential mechanism needs a candidate grid".into(),
                    ));
                }
                NoiseSampler::Exponential {
                    grid: params.grid.clone(),
                    coefficient: params.epsilon / (2.0 * params.sensitivity),
                }
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, value: f64, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::Laplace(scale) => {
                let u: f64 = rng.random::<f64>() - 0.5;
                value - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseSampler::Gaussian(normal) => value + normal.sample(rng),
            NoiseSampler::Gamma(gamma) => value + gamma.sample(rng) - gamma.sample(rng),
            NoiseSampler::Exponential { grid, coefficient } => {
                // utility -|value - c|, shifted by the best score for stability
                let best = grid
                    .iter()
                    .map(|c| -(value - c).abs())
                    .fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = grid
                    .iter()
                    .map(|c| (coefficient * (-(value - c).abs() - best)).exp())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut target = rng.random::<f64>() * total;
                for (c, w) in grid.iter().zip(&weights) {
                    if target < *w {
                        return *c;
                    }
                    target -= w;
                }
                // rounding left the target past the last weight
                *grid
                    .iter()
                    .zip(&weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(c, _)| c)
                    .expect("positive total weight")
            }
        }
    }
}

pub fn benchmark_noise<R: Rng + ?Sized>(
    kind: BenchmarkMechanism,
    value: f64,
    params: &NoiseParams,
    rng: &mut R,
) -> Result<f64> {
    Ok(NoiseSampler::new(kind, params)?.sample(value, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomizer::{keyed_rng, StreamPurpose};

    fn moments(kind: BenchmarkMechanism, params: &NoiseParams, draws: usize) -> (f64, f64) {
        let sampler = NoiseSampler::new(kind, params).unwrap();
        let mut rng = keyed_rng(11, 0, 0, StreamPurpose::Benchmark);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..draws {
            let x = sampler.sample(0.0, &mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / draws as f64;
        (mean, (sq / draws as f64 - mean * mean).sqrt())
    }

    #[test]
    fn laplace_moments() {
        let params = NoiseParams::new(1.0, 3000.0);
        let (mean, sd) = moments(BenchmarkMechanism::Laplace, &params, 1_000_000);
        // sd of the mean is sqrt(2) * 3000 / 1000 ~ 4.2
        assert!(mean.abs() < 15.0, "{mean}");
        assert!((sd / (2f64.sqrt() * 3000.0) - 1.0).abs() < 0.01, "{sd}");
    }

    #[test]
    fn gaussian_sigma_matches_calibration() {
        let params = NoiseParams::new(1.0, 3000.0);
        let sigma = params.gaussian_sigma();
        // sqrt(2 ln 125000) * 3000
        assert!((sigma - 14_534.415_787_816_168).abs() < 1e-6, "{sigma}");
        let (mean, sd) = moments(BenchmarkMechanism::Gaussian, &params, 1_000_000);
        assert!(mean.abs() < 4.0 * sigma / 1000.0);
        assert!((sd / sigma - 1.0).abs() < 0.01);
    }

    #[test]
    fn gamma_shares_sum_to_laplace() {
        let mut params = NoiseParams::new(1.0, 3000.0);
        params.gamma_shares = 10;
        let sampler = NoiseSampler::new(BenchmarkMechanism::Gamma, &params).unwrap();
        let mut rng = keyed_rng(12, 0, 0, StreamPurpose::Benchmark);
        let draws = 200_000;
        let sums: Vec<f64> = (0..draws)
            .map(|_| (0..10).map(|_| sampler.sample(0.0, &mut rng)).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / draws as f64;
        let sd = (sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws as f64).sqrt();
        assert!(mean.abs() < 4.0 * 2f64.sqrt() * 3000.0 / (draws as f64).sqrt());
        assert!((sd / (2f64.sqrt() * 3000.0) - 1.0).abs() < 0.01, "{sd}");
        // Laplace tail: P(|X| > b) = e^-1
        let tail = sums.iter().filter(|x| x.abs() > 3000.0).count() as f64 / draws as f64;
        assert!((tail - (-1f64).exp()).abs() < 0.005, "{tail}");

        params.gamma_shares = 1;
        let (mean, _) = moments(BenchmarkMechanism::Gamma, &params, 1_000_000);
        assert!(mean.abs() < 15.0);
    }

    #[test]
    fn exponential_mechanism_limits() {
        let grid: Vec<f64> = (0..10).map(|i| 150.0 + 300.0 * i as f64).collect();
        let mut params = NoiseParams::new(1e6, 3000.0);
        params.grid = grid.clone();
        let mut rng = keyed_rng(1, 0, 0, StreamPurpose::Benchmark);
        for v in [0.0, 140.0, 1000.0, 2999.0] {
            let got = benchmark_noise(BenchmarkMechanism::ExponentialMech, v, &params, &mut rng).unwrap();
            let nearest = grid
                .iter()
                .copied()
                .min_by(|a, b| (a - v).abs().total_cmp(&(b - v).abs()))
                .unwrap();
            assert_eq!(got, nearest);
        }
        // tiny budget: close to uniform over the grid
        params.epsilon = 1e-9;
        let sampler = NoiseSampler::new(BenchmarkMechanism::ExponentialMech, &params).unwrap();
        let draws = 100_000;
        let mean = (0..draws).map(|_| sampler.sample(0.0, &mut rng)).sum::<f64>() / draws as f64;
        assert!((mean - 1500.0).abs() < 20.0, "{mean}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = keyed_rng(1, 0, 0, StreamPurpose::Benchmark);
        for kind in BenchmarkMechanism::ALL {
            assert!(benchmark_noise(kind, 1.0, &NoiseParams::new(0.0, 1.0), &mut rng).is_err());
            assert!(benchmark_noise(kind, 1.0, &NoiseParams::new(1.0, -1.0), &mut rng).is_err());
        }
        assert!(benchmark_noise(
            BenchmarkMechanism::ExponentialMech,
            1.0,
            &NoiseParams::new(1.0, 1.0),
            &mut rng
        )
        .is_err());
        assert!("cauchy".parse::<BenchmarkMechanism>().is_err());
    }
}
