//! Rank and linear correlation with two-sided p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

/// Largest n for which Spearman p-values come from full enumeration.
pub const EXACT_SPEARMAN_MAX_N: usize = 9;

/// Number of models the Bonferroni flag divides 0.05 by, unless overridden.
pub const DEFAULT_BONFERRONI_TESTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationMethod {
    SpearmanExact,
    SpearmanTApprox,
    PearsonLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignificanceFlags {
    pub p05: bool,
    pub p01: bool,
    pub p001: bool,
    /// `p < 0.05 / bonferroni_tests`; reported only, never applied.
    pub bonferroni: bool,
    pub bonferroni_tests: usize,
}

impl SignificanceFlags {
    pub fn new(p: f64, bonferroni_tests: usize) -> Self {
        Self {
            p05: p < 0.05,
            p01: p < 0.01,
            p001: p < 0.001,
            bonferroni: p < 0.05 / bonferroni_tests.max(1) as f64,
            bonferroni_tests,
        }
    }

    /// `***`, `**`, `*` or empty.
    pub fn stars(&self) -> &'static str {
        if self.p001 {
            "***"
        } else if self.p01 {
            "**"
        } else if self.p05 {
            "*"
        } else {
            ""
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_two_sided: f64,
    pub n: usize,
    pub method: CorrelationMethod,
    pub significance: SignificanceFlags,
}

impl CorrelationResult {
    fn new(coefficient: f64, p: f64, n: usize, method: CorrelationMethod) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            coefficient: coefficient.clamp(-1.0, 1.0),
            p_two_sided: p,
            n,
            method,
            significance: SignificanceFlags::new(p, DEFAULT_BONFERRONI_TESTS),
        }
    }

    pub fn with_bonferroni_tests(mut self, tests: usize) -> Self {
        self.significance = SignificanceFlags::new(self.p_two_sided, tests);
        self
    }
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Doubled average ranks, which are always integers.
fn doubled_ranks(x: &[f64]) -> Vec<i64> {
    average_ranks(x).iter().map(|r| (2.0 * r).round() as i64).collect()
}

fn check_pair(x: &[f64], y: &[f64], min_n: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min_n {
        return Err(StatsError::TooFew { needed: min_n, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Plain Pearson coefficient; errors when either input is constant.
pub fn pearson_coefficient(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation coefficient via
/// `t = r * sqrt((n - 2) / (1 - r^2))` on `n - 2` degrees of freedom.
pub fn t_approx_p(r: f64, n: usize) -> f64 {
    if n <= 2 {
        return 1.0;
    }
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Visits every permutation of `v` (Heap's algorithm).
fn for_each_permutation(v: &mut [i64], mut f: impl FnMut(&[i64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Exact two-sided permutation p-value: the share of orderings of `y`
/// whose |rho| is at least the observed |rho|. Computed in integer
/// arithmetic on doubled ranks.
pub fn spearman_exact_p(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let rx = doubled_ranks(x);
    let mut ry = doubled_ranks(y);
    let n = rx.len() as i64;
    // sum(Rx * Ry) - n * (n + 1)^2 is proportional to rho.
    let centre = n * (n + 1) * (n + 1);
    let stat = |ry: &[i64]| (rx.iter().zip(ry).map(|(a, b)| a * b).sum::<i64>() - centre).abs();
    let observed = stat(&ry);
    let (mut hits, mut total) = (0u64, 0u64);
    for_each_permutation(&mut ry, |perm| {
        total += 1;
        if stat(perm) >= observed {
            hits += 1;
        }
    });
    Ok(hits as f64 / total as f64)
}

/// Spearman rank correlation with average ranks for ties. The p-value is
/// exact for `n <= 9` and t-approximated above.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y, 3)?;
    let rho = pearson_coefficient(&average_ranks(x), &average_ranks(y))?;
    let n = x.len();
    Ok(if n <= EXACT_SPEARMAN_MAX_N {
        CorrelationResult::new(rho, spearman_exact_p(x, y)?, n, CorrelationMethod::SpearmanExact)
    } else {
        CorrelationResult::new(rho, t_approx_p(rho, n), n, CorrelationMethod::SpearmanTApprox)
    })
}

/// Spearman with the t-approximation regardless of n.
pub fn spearman_t_approx(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y, 3)?;
    let rho = pearson_coefficient(&average_ranks(x), &average_ranks(y))?;
    Ok(CorrelationResult::new(rho, t_approx_p(rho, x.len()), x.len(), CorrelationMethod::SpearmanTApprox))
}

/// Pearson correlation between `ln(1 + citations)` and `scores`.
pub fn pearson_log_citations(citations: &[u64], scores: &[f64]) -> Result<CorrelationResult, StatsError> {
    let logc: Vec<f64> = citations.iter().map(|&c| (c as f64).ln_1p()).collect();
    check_pair(&logc, scores, 3)?;
    let r = pearson_coefficient(&logc, scores)?;
    Ok(CorrelationResult::new(r, t_approx_p(r, scores.len()), scores.len(), CorrelationMethod::PearsonLog))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_orderings() {
        let r = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert!((r.coefficient - 1.0).abs() < 1e-12);
        assert_eq!(r.method, CorrelationMethod::SpearmanExact);
        // Two of six orderings reach |rho| = 1.
        assert!((r.p_two_sided - 1.0 / 3.0).abs() < 1e-15);
        let r = spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap();
        assert!((r.coefficient + 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0]),
            Err(StatsError::ConstantInput)
        ));
    }

    #[test]
    fn heap_visits_all_permutations_once() {
        let mut v = vec![1, 2, 3, 4, 5];
        let mut seen = std::collections::BTreeSet::new();
        for_each_permutation(&mut v, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn stars() {
        assert_eq!(SignificanceFlags::new(0.0004, 17).stars(), "***");
        assert_eq!(SignificanceFlags::new(0.0015, 17).stars(), "**");
        assert_eq!(SignificanceFlags::new(0.03, 17).stars(), "*");
        assert_eq!(SignificanceFlags::new(0.2614, 17).stars(), "");
        assert!(SignificanceFlags::new(0.0028, 17).bonferroni);
        assert!(!SignificanceFlags::new(0.003, 17).bonferroni);
    }

    #[test]
    fn log_pearson_of_affine_transform_is_one() {
        let c = [0u64, 3, 10, 55, 400];
        let s: Vec<f64> = c.iter().map(|&v| 0.1 + 0.02 * (v as f64).ln_1p()).collect();
        let r = pearson_log_citations(&c, &s).unwrap();
        assert!((r.coefficient - 1.0).abs() < 1e-12);
        assert_eq!(r.p_two_sided, 0.0);
    }
}
