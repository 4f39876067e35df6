//! Measurement suite: similarity tests, top-k experiments and baseline
//! comparisons.

pub mod benchmark;
pub mod experiment;
pub mod kruskal;
pub mod noise;
pub mod similarity;

use serde::{Deserialize, Serialize};

pub use benchmark::{run_benchmark_suite, BenchmarkConfig, BenchmarkReport, MechanismResult};
pub use experiment::{run_experiment, ExperimentParams, ExperimentResult, RepetitionOutcome};
pub use kruskal::{kruskal_wallis, kruskal_wallis_counts, KWResult};
pub use noise::{benchmark_noise, BenchmarkMechanism, NoiseParams, NoiseSampler};
pub use similarity::{similarity_from_counts, similarity_report, SimilarityReport};

/// Mean, median and range of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(deserialize_with = "crate::nullable::float")]
    pub mean: f64,
    #[serde(deserialize_with = "crate::nullable::float")]
    pub median: f64,
    #[serde(deserialize_with = "crate::nullable::float")]
    pub min: f64,
    #[serde(deserialize_with = "crate::nullable::float")]
    pub max: f64,
}

impl Summary {
    /// Ignores NaN entries; all-NaN or empty input yields NaN fields.
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                median: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        let len = v.len();
        let median = if len % 2 == 1 {
            v[len / 2]
        } else {
            0.5 * (v[len / 2 - 1] + v[len / 2])
        };
        Self {
            mean: v.iter().sum::<f64>() / len as f64,
            median,
            min: v[0],
            max: v[len - 1],
        }
    }
}
