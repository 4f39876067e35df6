//! Per-appliance similarity between true and estimated level distributions.

use serde::{Deserialize, Serialize};

use crate::aggregator::EstimatedHistogram;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::kruskal::kruskal_wallis_counts;
use crate::quantizer::QuantizationScheme;

pub const SIMILARITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean p-value over timestamps for each appliance; NaN when every
    /// timestamp was degenerate.
    #[serde(deserialize_with = "crate::nullable::floats")]
    pub per_appliance: Vec<f64>,
    /// Mean of the finite per-appliance p-values.
    #[serde(deserialize_with = "crate::nullable::float")]
    pub mean_p: f64,
    /// Appliances with p above the threshold.
    pub similar_count: usize,
    pub degenerate_count: usize,
}

/// Compares, for every appliance and timestamp, the true per-user levels
/// against the estimated counts rounded and clamped at zero.
pub fn similarity_report(
    truth: &Dataset,
    histograms: &[EstimatedHistogram],
    scheme: &QuantizationScheme,
) -> Result<SimilarityReport> {
    similarity_from_counts(&truth.true_level_counts(scheme)?, histograms)
}

/// As [`similarity_report`] with true counts laid out `[t][(a-1)*d + l-1]`.
pub fn similarity_from_counts(truth: &[Vec<u64>], histograms: &[EstimatedHistogram]) -> Result<SimilarityReport> {
    if truth.len() != histograms.len() || histograms.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} true timestamps against {} estimated",
            truth.len(),
            histograms.len()
        )));
    }
    let (n, d) = (histograms[0].appliance_count, histograms[0].level_count);
    if truth.iter().any(|t| t.len() != n * d) || histograms.iter().any(|h| h.counts.len() != n * d) {
        return Err(Error::InvalidParameter(
            "appliance rosters or level counts differ".into(),
        ));
    }
    let mut per_appliance = Vec::with_capacity(n);
    for a in 1..=n {
        let mut sum = 0.0;
        let mut finite = 0usize;
        for (t, h) in truth.iter().zip(histograms) {
            let true_counts = &t[(a - 1) * d..a * d];
            let estimated: Vec<u64> = h.appliance(a).iter().map(|c| c.max(0.0).round() as u64).collect();
            if let Ok(r) = kruskal_wallis_counts(&[true_counts, &estimated]) {
                sum += r.p_value;
                finite += 1;
            }
        }
        per_appliance.push(if finite == 0 { f64::NAN } else { sum / finite as f64 });
    }
    let valid: Vec<f64> = per_appliance.iter().copied().filter(|p| p.is_finite()).collect();
    let degenerate_count = n - valid.len();
    if degenerate_count > 0 {
        log::warn!("{degenerate_count} appliance(s) had no testable timestamp and are excluded from the mean");
    }
    let mean_p = if valid.is_empty() {
        f64::NAN
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    Ok(SimilarityReport {
        similar_count: valid.iter().filter(|&&p| p > SIMILARITY_THRESHOLD).count(),
        per_appliance,
        mean_p,
        degenerate_count,
    })
}
