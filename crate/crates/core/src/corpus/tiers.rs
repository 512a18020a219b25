use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Closed citation interval `[lower, upper]`; `upper = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationTier {
    pub lower: u64,
    pub upper: Option<u64>,
    pub label: String,
}

impl CitationTier {
    pub fn new(lower: u64, upper: Option<u64>, label: impl Into<String>) -> Self {
        Self {
            lower,
            upper,
            label: label.into(),
        }
    }

    pub fn contains(&self, citations: u64) -> bool {
        citations >= self.lower && self.upper.map_or(true, |u| citations <= u)
    }
}

/// An ordered list of tiers that partitions `[0, inf)` without gaps or overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CitationTier>", into = "Vec<CitationTier>")]
pub struct TierSet(Vec<CitationTier>);

impl TierSet {
    pub fn new(tiers: Vec<CitationTier>) -> Result<Self, CorpusError> {
        let bad = |m: String| Err(CorpusError::Tiers(m));
        if tiers.is_empty() {
            return bad("no tiers given".into());
        }
        if tiers[0].lower != 0 {
            return bad(format!("first tier {} starts at {}", tiers[0].label, tiers[0].lower));
        }
        for (i, t) in tiers.iter().enumerate() {
            if let Some(u) = t.upper {
                if u < t.lower {
                    return bad(format!("tier {} has upper < lower", t.label));
                }
            }
            match (t.upper, tiers.get(i + 1)) {
                (Some(u), Some(next)) => {
                    if next.lower <= u {
                        return bad(format!("tiers {} and {} overlap", t.label, next.label));
                    }
                    if next.lower != u + 1 {
                        return bad(format!("gap between tiers {} and {}", t.label, next.label));
                    }
                }
                (None, Some(next)) => {
                    return bad(format!("tiers {} and {} overlap", t.label, next.label))
                }
                (Some(_), None) => {
                    return bad(format!("last tier {} is bounded", t.label));
                }
                (None, None) => {}
            }
        }
        let mut labels: Vec<&str> = tiers.iter().map(|t| t.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != tiers.len() {
            return bad("tier labels must be unique".into());
        }
        Ok(Self(tiers))
    }

    /// Sampling strata: 0, 1-9, 10-49, 50-99, 100-249, 250-499, 500+.
    pub fn stratification_default() -> Self {
        Self::from_bounds(&[0, 1, 10, 50, 100, 250, 500])
    }

    /// Analysis bins: 0, 1-4, 5-9, 10-24, 25-49, 50-99, 100-199, 200-499, 500+.
    pub fn analysis_default() -> Self {
        Self::from_bounds(&[0, 1, 5, 10, 25, 50, 100, 200, 500])
    }

    /// Builds tiers from ascending lower bounds starting at 0.
    pub fn from_bounds(lowers: &[u64]) -> Self {
        let tiers = lowers
            .iter()
            .enumerate()
            .map(|(i, &lo)| match lowers.get(i + 1) {
                Some(&next) if next - 1 == lo => CitationTier::new(lo, Some(lo), lo.to_string()),
                Some(&next) => CitationTier::new(lo, Some(next - 1), format!("{lo}-{}", next - 1)),
                None => CitationTier::new(lo, None, format!("{lo}+")),
            })
            .collect();
        Self::new(tiers).expect("ascending bounds from zero form a partition")
    }

    /// Resolves a named bin set (`default9`, `strata7`) or a comma-separated
    /// list of lower bounds such as `0,1,10,100`.
    pub fn parse_named(spec: &str) -> Result<Self, CorpusError> {
        match spec {
            "default9" => Ok(Self::analysis_default()),
            "strata7" => Ok(Self::stratification_default()),
            other => {
                let lowers: Result<Vec<u64>, _> =
                    other.split(',').map(|s| s.trim().parse::<u64>()).collect();
                let lowers =
                    lowers.map_err(|_| CorpusError::Tiers(format!("unknown bin set {other}")))?;
                if lowers.first() != Some(&0) || lowers.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CorpusError::Tiers(format!(
                        "bounds must ascend from 0: {other}"
                    )));
                }
                Ok(Self::from_bounds(&lowers))
            }
        }
    }

    pub fn tiers(&self) -> &[CitationTier] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, citations: u64) -> usize {
        self.0
            .iter()
            .position(|t| t.contains(citations))
            .expect("tier set partitions the citation range")
    }

    pub fn tier_of(&self, citations: u64) -> &CitationTier {
        &self.0[self.index_of(citations)]
    }
}

impl TryFrom<Vec<CitationTier>> for TierSet {
    type Error = CorpusError;
    fn try_from(v: Vec<CitationTier>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TierSet> for Vec<CitationTier> {
    fn from(t: TierSet) -> Self {
        t.0
    }
}
