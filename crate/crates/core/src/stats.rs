//! Goodness-of-fit tests and binomial confidence intervals.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Level used by every goodness-of-fit test in the crate.
pub const GOF_LEVEL: f64 = 0.01;

/// Asymptotic Kolmogorov quantile at level 0.01.
const KOLMOGOROV_99: f64 = 1.627_62;

/// Normal quantile of the 95% two-sided interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Outcome of a goodness-of-fit test at [`GOF_LEVEL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub n: usize,
    pub threshold: f64,
    pub pass: bool,
}

impl GofResult {
    fn new(statistic: f64, n: usize, threshold: f64) -> Self {
        GofResult { statistic, n, threshold, pass: statistic <= threshold }
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
///
/// Repeated sample values are handled by comparing both sides of each jump.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

/// One-sample KS test at level 0.01 (Stephens' finite-sample correction).
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> GofResult {
    let n = sample.len();
    let root = (n as f64).sqrt();
    let threshold = KOLMOGOROV_99 / (root + 0.12 + 0.11 / root);
    GofResult::new(ks_statistic(sample, cdf), n, threshold)
}

/// Two-sample KS distance.
pub fn ks2_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Two-sample KS test at level 0.01 (asymptotic critical value).
pub fn ks2_test(a: &[f64], b: &[f64]) -> GofResult {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let threshold = KOLMOGOROV_99 * ((n + m) / (n * m)).sqrt();
    GofResult::new(ks2_statistic(a, b), a.len() + b.len(), threshold)
}

/// Pearson chi-square test of `observed` counts against cell probabilities `expected_p`.
///
/// Cells with zero probability must have zero counts and are dropped from the degrees of freedom.
pub fn chi_square_test(observed: &[u64], expected_p: &[f64]) -> GofResult {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_p) {
        if p <= 0.0 {
            if o > 0 {
                stat = f64::INFINITY;
            }
            continue;
        }
        cells += 1;
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = cells.saturating_sub(1).max(1) as f64;
    let threshold = ChiSquared::new(df).expect("positive dof").inverse_cdf(1.0 - GOF_LEVEL);
    GofResult::new(stat, n as usize, threshold)
}

/// 95% half-width for a binomial proportion `k / n`.
///
/// Normal approximation, falling back to the Wilson interval when fewer than
/// 30 successes or failures were observed.
pub fn binomial_half_width(k: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    if k.min(n - k) >= 30 {
        Z95 * (p * (1.0 - p) / nf).sqrt()
    } else {
        let (lo, hi) = wilson_interval(k, n);
        (p - lo).max(hi - p)
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = Z95 / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard error of a proportion.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Weighted least-squares monotone fit (pool adjacent violators).
///
/// Returns the nondecreasing sequence closest to `ys` under weights `ws`.
pub fn isotonic_increasing(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    // blocks of (weighted mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(ws) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, l1 + l2));
        }
    }
    blocks.iter().flat_map(|&(m, _, l)| std::iter::repeat_n(m, l)).collect()
}
