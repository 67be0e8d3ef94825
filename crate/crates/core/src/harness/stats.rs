//! Paired-comparison statistics and table formatting.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient pairs: {0} non-zero differences, at least 5 required")]
    InsufficientPairs(usize),
    #[error("non-finite paired difference")]
    NonFinite,
}

/// Largest `n` for which the exact null distribution is used.
pub const EXACT_MAX_PAIRS: usize = 25;

#[derive(Clone, Debug, PartialEq)]
pub struct Wilcoxon {
    /// Non-zero differences actually ranked.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks of `|d|`, doubled so tied ranks stay integral.
pub fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; their doubled mean is i+j+2
        for &o in &order[i..=j] {
            ranks[o] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped.
///
/// For at most [`EXACT_MAX_PAIRS`] pairs the p-value comes from the exact
/// permutation distribution of `W+` (with average ranks for ties):
/// `p = min(1, 2·min(P(W+ ≤ w), P(W+ ≥ w)))`. Larger samples use the
/// tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<Wilcoxon, StatsError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n < 5 {
        return Err(StatsError::InsufficientPairs(n));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = ranks
        .iter()
        .zip(&nz)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total2: u64 = ranks.iter().sum();
    let w_plus = w2 as f64 / 2.0;
    let w_minus = (total2 - w2) as f64 / 2.0;

    if n <= EXACT_MAX_PAIRS {
        let counts = signed_rank_counts(&ranks);
        let le: f64 = counts[..=w2 as usize].iter().sum();
        let ge: f64 = counts[w2 as usize..].iter().sum();
        let all = 2f64.powi(n as i32);
        let p_value = (2.0 * le.min(ge) / all).min(1.0);
        return Ok(Wilcoxon {
            n,
            w_plus,
            w_minus,
            p_value,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = ((w_plus - mean).abs() - 0.5).max(0.0);
    let z = if var > 0.0 { dev / var.sqrt() } else { 0.0 };
    let normal = Normal::standard();
    let p_value = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    Ok(Wilcoxon {
        n,
        w_plus,
        w_minus,
        p_value,
        exact: false,
    })
}

/// Number of sign assignments giving each doubled `W+` value.
fn signed_rank_counts(ranks: &[u64]) -> Vec<f64> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0.0; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let s = sorted(v);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Three significant figures below 1000, whole numbers above.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if mag >= 3 {
        return format!("{x:.0}");
    }
    let decimals = (2 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `"mean ± std"` with sample std.
pub fn fmt_mean_std(values: &[f64]) -> String {
    format!(
        "{} ± {}",
        fmt_sig(mean(values)),
        fmt_sig(sample_std(values))
    )
}

/// `*` below 0.05, `**` below 0.005.
pub fn significance_marker(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.005 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}
