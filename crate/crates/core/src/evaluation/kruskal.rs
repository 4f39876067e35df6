//! Kruskal-Wallis H test with tie correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::chi_squared_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KWResult {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
    /// Whether tied observations were present and corrected for.
    pub tie_corrected: bool,
}

fn finish(rank_sums: &[(f64, f64)], total: f64, tie_term: f64) -> Result<KWResult> {
    let groups = rank_sums.len();
    let correction = 1.0 - tie_term / (total.powi(3) - total);
    if !(correction > 0.0) {
        return Err(Error::Degenerate("all observations are tied".into()));
    }
    let raw =
        12.0 / (total * (total + 1.0)) * rank_sums.iter().map(|(r, n)| r * r / n).sum::<f64>() - 3.0 * (total + 1.0);
    let h = (raw / correction).max(0.0);
    let df = groups - 1;
    Ok(KWResult {
        h,
        df,
        p_value: chi_squared_sf(h, df as f64),
        tie_corrected: tie_term > 0.0,
    })
}

/// Test on raw samples. Ranks are mid-ranks over the pooled sample.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<KWResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("need at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidParameter("every group must be non-empty".into()));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("observations must not be NaN".into()));
    }
    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.iter().map(move |&x| (x, i)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = pooled.len() as f64;
    let mut rank_sums: Vec<(f64, f64)> = groups.iter().map(|g| (0.0, g.len() as f64)).collect();
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        let ties = (end - start) as f64;
        // ranks start + 1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &(_, g) in &pooled[start..end] {
            rank_sums[g].0 += rank;
        }
        tie_term += ties.powi(3) - ties;
        start = end;
    }
    finish(&rank_sums, total, tie_term)
}

/// Test on ordinal data given as frequencies. `groups[g][c]` is the number
/// of observations of group `g` in category `c`, categories ordered.
pub fn kruskal_wallis_counts(groups: &[&[u64]]) -> Result<KWResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("need at least two groups".into()));
    }
    let categories = groups[0].len();
    if groups.iter().any(|g| g.len() != categories) {
        return Err(Error::InvalidParameter("groups disagree on the category count".into()));
    }
    let sizes: Vec<u64> = groups.iter().map(|g| g.iter().sum()).collect();
    if sizes.contains(&0) {
        return Err(Error::InvalidParameter("every group must be non-empty".into()));
    }
    let total: u64 = sizes.iter().sum();
    let mut rank_sums: Vec<(f64, f64)> = sizes.iter().map(|&n| (0.0, n as f64)).collect();
    let mut tie_term = 0.0;
    let mut below = 0u64;
    for c in 0..categories {
        let ties: u64 = groups.iter().map(|g| g[c]).sum();
        if ties == 0 {
            continue;
        }
        let rank = below as f64 + (ties as f64 + 1.0) / 2.0;
        for (g, sums) in groups.iter().zip(rank_sums.iter_mut()) {
            sums.0 += g[c] as f64 * rank;
        }
        let t = ties as f64;
        tie_term += t.powi(3) - t;
        below += ties;
    }
    finish(&rank_sums, total as f64, tie_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Textbook form: ranks by counting, H from squared rank-mean
    /// deviations, p from statrs.
    fn reference(groups: &[Vec<f64>]) -> (f64, f64) {
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        let n = pooled.len() as f64;
        let rank = |x: f64| {
            let less = pooled.iter().filter(|&&y| y < x).count() as f64;
            let equal = pooled.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let mean_rank = (n + 1.0) / 2.0;
        let mut num = 0.0;
        for g in groups {
            let rbar = g.iter().map(|&x| rank(x)).sum::<f64>() / g.len() as f64;
            num += g.len() as f64 * (rbar - mean_rank).powi(2);
        }
        let den: f64 = pooled.iter().map(|&x| (rank(x) - mean_rank).powi(2)).sum();
        let h = (n - 1.0) * num / den;
        let chi = ChiSquared::new((groups.len() - 1) as f64).unwrap();
        (h, chi.sf(h))
    }

    #[test]
    fn textbook_example() {
        let r = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        // 12/42 * (36/3 + 225/3) - 21 = 27/7, p = erfc(sqrt(27/14))
        assert!((r.h - 27.0 / 7.0).abs() < 1e-12);
        assert!((r.p_value - 0.049_534_613_435_626_74).abs() < 1e-9, "{}", r.p_value);
        assert_eq!(r.df, 1);
        assert!(!r.tie_corrected);
    }

    #[test]
    fn agrees_with_reference_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..100 {
            let groups: Vec<Vec<f64>> = (0..rng.random_range(2..=5))
                .map(|g| {
                    let size = rng.random_range(5..=200);
                    // coarse rounding on half the cases to force ties
                    let scale = if case % 2 == 0 { 1.0 } else { 1000.0 };
                    (0..size)
                        .map(|_| ((rng.random::<f64>() + 0.05 * g as f64) * scale).round() / scale)
                        .collect()
                })
                .collect();
            let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
            let got = kruskal_wallis(&refs).unwrap();
            let (h, p) = reference(&groups);
            assert!((got.h - h).abs() < 1e-6, "case {case}: {} vs {h}", got.h);
            assert!((got.p_value - p).abs() < 1e-6, "case {case}: {} vs {p}", got.p_value);
        }
    }

    #[test]
    fn counts_form_matches_expanded_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let groups: Vec<Vec<u64>> = (0..rng.random_range(2..=4))
                .map(|_| (0..6).map(|_| rng.random_range(0..40)).collect())
                .collect();
            if groups.iter().any(|g| g.iter().sum::<u64>() == 0) {
                continue;
            }
            let expanded: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| {
                    g.iter()
                        .enumerate()
                        .flat_map(|(c, &k)| std::iter::repeat_n(c as f64, k as usize))
                        .collect()
                })
                .collect();
            let counts: Vec<&[u64]> = groups.iter().map(Vec::as_slice).collect();
            let samples: Vec<&[f64]> = expanded.iter().map(Vec::as_slice).collect();
            let a = kruskal_wallis_counts(&counts).unwrap();
            let b = kruskal_wallis(&samples).unwrap();
            assert!((a.h - b.h).abs() < 1e-9);
            assert!((a.p_value - b.p_value).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_groups_give_p_one() {
        let r = kruskal_wallis_counts(&[&[5, 3, 2], &[5, 3, 2]]).unwrap();
        assert!(r.h.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            kruskal_wallis(&[&[2.0, 2.0], &[2.0]]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            kruskal_wallis_counts(&[&[0, 4], &[0, 9]]),
            Err(Error::Degenerate(_))
        ));
        assert!(kruskal_wallis(&[&[1.0]]).is_err());
        assert!(kruskal_wallis(&[&[1.0], &[]]).is_err());
        assert!(kruskal_wallis_counts(&[&[1, 0], &[0, 0]]).is_err());
    }

    #[test]
    fn null_samples_rarely_reject() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 1000;
        let mut above = 0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
            above += (kruskal_wallis(&[&a, &b]).unwrap().p_value > 0.05) as usize;
        }
        // 950 expected, binomial sd ~ 6.9
        assert!((920..=980).contains(&above), "{above}");
    }

    #[test]
    fn p_decreases_with_separation() {
        let base: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut prev = 1.1;
        for shift in [0.0, 5.0, 10.0, 20.0, 40.0] {
            let other: Vec<f64> = base.iter().map(|x| x + shift + 0.5).collect();
            let r = kruskal_wallis(&[&base, &other]).unwrap();
            assert!(r.p_value < prev);
            prev = r.p_value;
        }
    }
}
