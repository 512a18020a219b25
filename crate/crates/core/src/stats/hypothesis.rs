use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::factorial::ln_binomial;

use super::corr::average_ranks;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Sidedness {
    #[default]
    OneSidedGreater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ZeroPolicy {
    /// Zero coefficients are dropped before counting.
    #[default]
    Exclude,
    /// Zero coefficients count as not positive.
    CountAsNonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTestResult {
    pub n_models: usize,
    pub n_positive: usize,
    pub p_value: f64,
    pub sidedness: Sidedness,
}

fn binom_pmf_half(n: u64, k: u64) -> f64 {
    (ln_binomial(n, k) - n as f64 * std::f64::consts::LN_2).exp()
}

/// Exact binomial test of the positive share of `coefficients` against 0.5.
pub fn sign_consistency(coefficients: &[f64], sidedness: Sidedness, zeros: ZeroPolicy) -> SignTestResult {
    let kept: Vec<f64> = coefficients
        .iter()
        .copied()
        .filter(|c| !(zeros == ZeroPolicy::Exclude && *c == 0.0))
        .collect();
    let n = kept.len() as u64;
    let k = kept.iter().filter(|c| **c > 0.0).count() as u64;
    let p = match sidedness {
        Sidedness::OneSidedGreater => (k..=n).map(|i| binom_pmf_half(n, i)).sum::<f64>(),
        Sidedness::TwoSided => {
            let observed = binom_pmf_half(n, k);
            (0..=n)
                .map(|i| binom_pmf_half(n, i))
                .filter(|p| *p <= observed * (1.0 + 1e-9))
                .sum::<f64>()
        }
    };
    SignTestResult {
        n_models: n as usize,
        n_positive: k as usize,
        p_value: p.min(1.0),
        sidedness,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: a.len().min(b.len()),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    if sa + sb == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2)
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    Ok(WelchResult {
        t,
        df,
        p_two_sided: (2.0 * dist.sf(t.abs())).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighLowResult {
    pub high_correct_rate: f64,
    pub low_correct_rate: f64,
    pub diff_pp: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub n_high: usize,
    pub n_low: usize,
}

pub const HIGH_LOW_MIN_N: usize = 8;

/// Indices of the bottom and top citation quartiles. A run of tied
/// citation counts that crosses a quartile cut is left out of both groups.
pub fn quartile_groups(citations: &[u64]) -> Result<(Vec<usize>, Vec<usize>), StatsError> {
    let n = citations.len();
    if n < HIGH_LOW_MIN_N {
        return Err(StatsError::TooFew { needed: HIGH_LOW_MIN_N, got: n });
    }
    let c: Vec<f64> = citations.iter().map(|&v| v as f64).collect();
    let ranks = average_ranks(&c);
    let q = n / 4;
    // A tie group occupying positions lo..=hi has average rank (lo + hi) / 2
    // and size hi - lo + 1.
    let mut tie_size = std::collections::HashMap::new();
    for &v in citations {
        *tie_size.entry(v).or_insert(0usize) += 1;
    }
    let (mut low, mut high) = (Vec::new(), Vec::new());
    for (i, &v) in citations.iter().enumerate() {
        let half = (tie_size[&v] as f64 - 1.0) / 2.0;
        let (lo, hi) = (ranks[i] - half, ranks[i] + half);
        if hi <= q as f64 {
            low.push(i);
        } else if lo > (n - q) as f64 {
            high.push(i);
        }
    }
    if low.len() < 2 || high.len() < 2 {
        return Err(StatsError::DegenerateQuartiles);
    }
    Ok((low, high))
}

/// Welch contrast of per-paper CORRECT rates between the top and bottom
/// citation quartiles.
pub fn high_low_contrast(correct_rates: &[f64], citations: &[u64]) -> Result<HighLowResult, StatsError> {
    if correct_rates.len() != citations.len() {
        return Err(StatsError::LengthMismatch(correct_rates.len(), citations.len()));
    }
    let (low, high) = quartile_groups(citations)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| correct_rates[i]).collect::<Vec<f64>>();
    let (lo, hi) = (pick(&low), pick(&high));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ml, mh) = (mean(&lo), mean(&hi));
    let (t, p) = match welch_t_test(&hi, &lo) {
        Ok(w) => (w.t, w.p_two_sided),
        // Both groups constant and equal: no difference at all.
        Err(StatsError::DegenerateVariance) if ml == mh => (0.0, 1.0),
        Err(e) => return Err(e),
    };
    Ok(HighLowResult {
        high_correct_rate: mh,
        low_correct_rate: ml,
        diff_pp: (mh - ml) * 100.0,
        t_statistic: t,
        p_value: p,
        n_high: hi.len(),
        n_low: lo.len(),
    })
}
