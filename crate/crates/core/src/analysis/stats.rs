//! Descriptive statistics and a two-sample permutation test.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub sd: f64,
    pub median: f64,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn describe(values: &[f64]) -> Option<Describe> {
    let m = mean(values)?;
    let n = values.len();
    let sd = if n > 1 { (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    Some(Describe { n, mean: m, sd, median })
}

/// Two-sided permutation test on the difference of means.
///
/// Returns `(count + 1) / (shuffles + 1)` where `count` is the number of label
/// shuffles whose absolute mean difference reaches the observed one. This is a
/// descriptive indicator only; it does not account for repeated measures.
pub fn permutation_test<R: Rng + ?Sized>(a: &[f64], b: &[f64], shuffles: usize, rng: &mut R) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let observed = (mean(a)? - mean(b)?).abs();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    // Relative slack so ties with the observed statistic count as extreme.
    let threshold = observed * (1.0 - 1e-12);
    let mut extreme = 0usize;
    for _ in 0..shuffles {
        pooled.shuffle(rng);
        let sum_a: f64 = pooled[..a.len()].iter().sum();
        let diff = (sum_a / na - (total - sum_a) / nb).abs();
        if diff >= threshold {
            extreme += 1;
        }
    }
    Some((extreme as f64 + 1.0) / (shuffles as f64 + 1.0))
}
