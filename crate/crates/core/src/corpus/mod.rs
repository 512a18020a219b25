//! Paper corpus: records, citation tiers, loading, sampling and summaries.
//!
//! A corpus file is newline-delimited JSON with one [`PaperRecord`] per line.
//! Every record in a corpus carries the same citation snapshot date.

mod citations;
pub mod demo;
mod tiers;

pub use citations::{
    fetch_citations, CitationError, CitationFetch, CitationReport, CitationSource,
    FixtureCitations, HttpCitations,
};
pub use tiers::{CitationTier, TierSet};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line} (paper_id {paper_id}): {message}")]
    Schema {
        line: usize,
        paper_id: String,
        message: String,
    },
    #[error("duplicate paper_id {0}")]
    DuplicateId(String),
    #[error("mixed citation snapshots: {first} and {second}")]
    MixedSnapshots { first: NaiveDate, second: NaiveDate },
    #[error("paper {paper_id} has year {year}, outside the supported range {min}..={max}")]
    YearOutOfRange {
        paper_id: String,
        year: i32,
        min: i32,
        max: i32,
    },
    #[error("invalid citation tiers: {0}")]
    Tiers(String),
    #[error("quota {quota} exceeds population {population} of tier {tier}")]
    QuotaExceedsTier {
        tier: String,
        quota: usize,
        population: usize,
    },
    #[error("targeted papers ({targeted}) exceed quota {quota} of tier {tier}")]
    TargetedExceedsQuota {
        tier: String,
        targeted: usize,
        quota: usize,
    },
    #[error("unknown paper_id {0}")]
    UnknownPaper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VenueTier {
    TopTier,
    MidTier,
    OtherRanked,
    Unranked,
}

/// One paper: metadata plus the ground-truth citation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperRecord {
    pub paper_id: String,
    pub title: String,
    pub authors: Vec<String>,
    /// Empty for preprints.
    pub venue: String,
    pub venue_tier: VenueTier,
    pub year: i32,
    pub citation_count: u64,
    pub citation_snapshot_date: NaiveDate,
    pub has_named_method: bool,
    /// Name of the introduced method; required when `has_named_method` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_name: Option<String>,
    pub field_tags: Vec<String>,
}

impl PaperRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.paper_id.trim().is_empty() {
            return Err("paper_id is empty".into());
        }
        if self.title.trim().is_empty() {
            return Err("title is empty".into());
        }
        if self.authors.is_empty() || self.authors.iter().any(|a| a.trim().is_empty()) {
            return Err("authors must be a nonempty list of nonempty names".into());
        }
        if self.has_named_method
            && self
                .method_name
                .as_deref()
                .map_or(true, |m| m.trim().is_empty())
        {
            return Err("has_named_method is set but method_name is missing".into());
        }
        Ok(())
    }

    /// Author list as one display string, e.g. `"A. Lee, B. Chen"`.
    pub fn author_line(&self) -> String {
        self.authors.join(", ")
    }

    /// Venue as shown in probes; preprints render as `arXiv preprint`.
    pub fn venue_display(&self) -> &str {
        if self.venue.trim().is_empty() {
            "arXiv preprint"
        } else {
            self.venue.as_str()
        }
    }

    /// Exposure proxy used by the simulator and analyses: `ln(1 + citations)`.
    pub fn log_citations(&self) -> f64 {
        (self.citation_count as f64).ln_1p()
    }
}

/// Headline marginals of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_papers: usize,
    pub n_by_year: BTreeMap<i32, usize>,
    pub n_top_venue: usize,
    pub mean_citations: f64,
    pub median_citations: f64,
    pub min_citations: u64,
    pub max_citations: u64,
}

/// Parses a corpus from newline-delimited JSON text. Blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<PaperRecord>, CorpusError> {
    parse_lines(BufReader::new(text.as_bytes()), "<memory>")
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<PaperRecord>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_lines(BufReader::new(file), &path.display().to_string())
}

fn parse_lines<R: BufRead>(reader: R, origin: &str) -> Result<Vec<PaperRecord>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: origin.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
                line: line_no,
                paper_id: "?".into(),
                message: e.to_string(),
            })?;
        let paper_id = value
            .get("paper_id")
            .and_then(|v| v.as_str())
            .unwrap_or("?")
            .to_string();
        let record: PaperRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::Schema {
                line: line_no,
                paper_id: paper_id.clone(),
                message: e.to_string(),
            })?;
        record.validate().map_err(|message| CorpusError::Schema {
            line: line_no,
            paper_id,
            message,
        })?;
        records.push(record);
    }
    check_corpus(&records)?;
    Ok(records)
}

/// Corpus-level invariants: unique ids and a single citation snapshot.
pub fn check_corpus(records: &[PaperRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.paper_id.as_str()) {
            return Err(CorpusError::DuplicateId(r.paper_id.clone()));
        }
    }
    if let Some(first) = records.first() {
        if let Some(other) = records
            .iter()
            .find(|r| r.citation_snapshot_date != first.citation_snapshot_date)
        {
            return Err(CorpusError::MixedSnapshots {
                first: first.citation_snapshot_date,
                second: other.citation_snapshot_date,
            });
        }
    }
    Ok(())
}

/// Checks every record's year against an inclusive range.
pub fn check_years(records: &[PaperRecord], min: i32, max: i32) -> Result<(), CorpusError> {
    match records.iter().find(|r| r.year < min || r.year > max) {
        Some(r) => Err(CorpusError::YearOutOfRange {
            paper_id: r.paper_id.clone(),
            year: r.year,
            min,
            max,
        }),
        None => Ok(()),
    }
}

/// Canonical serialization: one compact JSON object per line, input order.
pub fn corpus_to_string(records: &[PaperRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("PaperRecord serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[PaperRecord]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(corpus_to_string(records).as_bytes())
        .map_err(io_err)
}

/// Content digest of a corpus, recorded in probe suites and response logs.
pub fn corpus_hash(records: &[PaperRecord]) -> String {
    sha256_hex(corpus_to_string(records).as_bytes())
}

pub fn summarize(records: &[PaperRecord]) -> CorpusSummary {
    let mut n_by_year = BTreeMap::new();
    for r in records {
        *n_by_year.entry(r.year).or_insert(0) += 1;
    }
    let mut cites: Vec<u64> = records.iter().map(|r| r.citation_count).collect();
    cites.sort_unstable();
    let n = cites.len();
    let mean = if n == 0 {
        0.0
    } else {
        cites.iter().map(|&c| c as f64).sum::<f64>() / n as f64
    };
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => cites[n / 2] as f64,
        _ => (cites[n / 2 - 1] + cites[n / 2]) as f64 / 2.0,
    };
    CorpusSummary {
        n_papers: n,
        n_by_year,
        n_top_venue: records
            .iter()
            .filter(|r| r.venue_tier == VenueTier::TopTier)
            .count(),
        mean_citations: mean,
        median_citations: median,
        min_citations: cites.first().copied().unwrap_or(0),
        max_citations: cites.last().copied().unwrap_or(0),
    }
}

/// Splits a corpus into its 2023 and 2024 cohorts.
pub fn temporal_split(
    papers: &[PaperRecord],
) -> Result<(Vec<PaperRecord>, Vec<PaperRecord>), CorpusError> {
    check_years(papers, 2023, 2024)?;
    let (early, late): (Vec<_>, Vec<_>) = papers.iter().cloned().partition(|p| p.year == 2023);
    Ok((early, late))
}

/// Stratified random sample with targeted inclusion.
///
/// Targeted papers are always kept and count against the quota of the tier
/// they fall in; the rest of each quota is drawn uniformly from the tier's
/// remaining members. Members are ordered by `paper_id` before drawing, so the
/// result depends only on the set of input papers, not their order. The
/// output is sorted by `paper_id`.
pub fn stratified_sample(
    papers: &[PaperRecord],
    tiers: &TierSet,
    quota_per_tier: &BTreeMap<String, usize>,
    targeted: &[String],
    seed: u64,
) -> Result<Vec<PaperRecord>, CorpusError> {
    for label in quota_per_tier.keys() {
        if !tiers.tiers().iter().any(|t| &t.label == label) {
            return Err(CorpusError::Tiers(format!("quota names unknown tier {label}")));
        }
    }
    let ids: HashSet<&str> = papers.iter().map(|p| p.paper_id.as_str()).collect();
    for t in targeted {
        if !ids.contains(t.as_str()) {
            return Err(CorpusError::UnknownPaper(t.clone()));
        }
    }
    let targeted: BTreeSet<&str> = targeted.iter().map(String::as_str).collect();

    let mut by_tier: Vec<Vec<&PaperRecord>> = vec![Vec::new(); tiers.len()];
    for p in papers {
        by_tier[tiers.index_of(p.citation_count)].push(p);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (tier, members) in tiers.tiers().iter().zip(by_tier.iter_mut()) {
        let quota = quota_per_tier.get(&tier.label).copied().unwrap_or(0);
        if quota > members.len() {
            return Err(CorpusError::QuotaExceedsTier {
                tier: tier.label.clone(),
                quota,
                population: members.len(),
            });
        }
        members.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
        let (forced, mut rest): (Vec<&PaperRecord>, Vec<&PaperRecord>) = members
            .iter()
            .partition(|p| targeted.contains(p.paper_id.as_str()));
        if forced.len() > quota {
            return Err(CorpusError::TargetedExceedsQuota {
                tier: tier.label.clone(),
                targeted: forced.len(),
                quota,
            });
        }
        rest.shuffle(&mut rng);
        let remaining = quota - forced.len();
        out.extend(forced.into_iter().cloned());
        out.extend(rest.into_iter().take(remaining).cloned());
    }
    out.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn paper(id: &str, year: i32, cites: u64, tags: &[&str]) -> PaperRecord {
        PaperRecord {
            paper_id: id.to_string(),
            title: format!("Learning Sparse Structure For Task {id}"),
            authors: vec![format!("Ada {id}"), "Lin Chen".to_string()],
            venue: "NeurIPS".into(),
            venue_tier: VenueTier::TopTier,
            year,
            citation_count: cites,
            citation_snapshot_date: NaiveDate::from_ymd_opt(2026, 5, 1).unwrap(),
            has_named_method: false,
            method_name: None,
            field_tags: tags.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::paper;
    use super::*;

    #[test]
    fn three_records_round_trip() {
        let recs = vec![
            paper("a", 2023, 0, &["ml"]),
            paper("b", 2024, 5, &["ml"]),
            paper("c", 2023, 90, &["sys"]),
        ];
        let parsed = parse_corpus(&corpus_to_string(&recs)).unwrap();
        assert_eq!(parsed, recs);
    }

    #[test]
    fn negative_citation_count_names_record() {
        let mut line = serde_json::to_value(paper("neg", 2023, 0, &["ml"])).unwrap();
        line["citation_count"] = serde_json::json!(-1);
        let text = format!(
            "{}\n{}\n",
            serde_json::to_string(&paper("ok", 2023, 1, &["ml"])).unwrap(),
            line
        );
        match parse_corpus(&text) {
            Err(CorpusError::Schema { line, paper_id, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(paper_id, "neg");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_mixed_snapshot_rejected() {
        let a = paper("a", 2023, 1, &["ml"]);
        let text = corpus_to_string(&[a.clone(), a.clone()]);
        assert!(matches!(parse_corpus(&text), Err(CorpusError::DuplicateId(id)) if id == "a"));

        let mut b = paper("b", 2023, 1, &["ml"]);
        b.citation_snapshot_date = NaiveDate::from_ymd_opt(2026, 6, 1).unwrap();
        let text = corpus_to_string(&[a, b]);
        assert!(matches!(
            parse_corpus(&text),
            Err(CorpusError::MixedSnapshots { .. })
        ));
    }

    #[test]
    fn empty_title_or_authors_rejected() {
        let mut p = paper("a", 2023, 1, &["ml"]);
        p.authors.clear();
        assert!(parse_corpus(&corpus_to_string(&[p])).is_err());
        let mut p = paper("a", 2023, 1, &["ml"]);
        p.title = " ".into();
        assert!(parse_corpus(&corpus_to_string(&[p])).is_err());
    }

    #[test]
    fn named_method_requires_name() {
        let mut p = paper("a", 2023, 1, &["ml"]);
        p.has_named_method = true;
        assert!(p.validate().is_err());
        p.method_name = Some("FlashGraph".into());
        assert!(p.validate().is_ok());
    }

    #[test]
    fn preprint_with_empty_venue_is_legal() {
        let mut p = paper("a", 2024, 0, &["ml"]);
        p.venue.clear();
        p.venue_tier = VenueTier::Unranked;
        assert!(p.validate().is_ok());
        assert_eq!(p.venue_display(), "arXiv preprint");
    }

    #[test]
    fn temporal_split_counts() {
        let papers: Vec<_> = (0..5)
            .map(|i| paper(&format!("p{i}"), if i < 2 { 2023 } else { 2024 }, 1, &["ml"]))
            .collect();
        let (a, b) = temporal_split(&papers).unwrap();
        assert_eq!((a.len(), b.len()), (2, 3));

        let late: Vec<_> = papers.iter().filter(|p| p.year == 2024).cloned().collect();
        let (a, b) = temporal_split(&late).unwrap();
        assert!(a.is_empty());
        assert_eq!(b.len(), 3);

        let bad = vec![paper("x", 2022, 1, &["ml"])];
        assert!(matches!(
            temporal_split(&bad),
            Err(CorpusError::YearOutOfRange { year: 2022, .. })
        ));
    }

    #[test]
    fn summary_of_small_corpus() {
        let papers = vec![
            paper("a", 2023, 0, &["ml"]),
            paper("b", 2024, 10, &["ml"]),
            paper("c", 2023, 2, &["ml"]),
            paper("d", 2023, 100, &["ml"]),
        ];
        let s = summarize(&papers);
        assert_eq!(s.n_papers, 4);
        assert_eq!(s.n_by_year[&2023], 3);
        assert_eq!(s.median_citations, 6.0);
        assert_eq!(s.mean_citations, 28.0);
        assert_eq!((s.min_citations, s.max_citations), (0, 100));
        assert_eq!(s.n_top_venue, 4);
    }

    fn zero_heavy() -> Vec<PaperRecord> {
        let mut v: Vec<_> = (0..5).map(|i| paper(&format!("z{i}"), 2023, 0, &["ml"])).collect();
        v.extend((0..4).map(|i| paper(&format!("m{i}"), 2023, 20 + i, &["ml"])));
        v
    }

    #[test]
    fn zero_quota_gives_empty_sample() {
        let tiers = TierSet::stratification_default();
        let quotas: BTreeMap<String, usize> =
            tiers.tiers().iter().map(|t| (t.label.clone(), 0)).collect();
        let s = stratified_sample(&zero_heavy(), &tiers, &quotas, &[], 3).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn quota_draws_only_from_its_tier() {
        let tiers = TierSet::stratification_default();
        let quotas = BTreeMap::from([("0".to_string(), 2)]);
        let papers = zero_heavy();
        for seed in 0..50 {
            let s = stratified_sample(&papers, &tiers, &quotas, &[], seed).unwrap();
            assert_eq!(s.len(), 2);
            assert!(s.iter().all(|p| p.citation_count == 0));
            assert_ne!(s[0].paper_id, s[1].paper_id);
        }
        let a = stratified_sample(&papers, &tiers, &quotas, &[], 9).unwrap();
        let b = stratified_sample(&papers, &tiers, &quotas, &[], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quota_over_population_names_tier() {
        let tiers = TierSet::stratification_default();
        let quotas = BTreeMap::from([("10-49".to_string(), 5)]);
        match stratified_sample(&zero_heavy(), &tiers, &quotas, &[], 1) {
            Err(CorpusError::QuotaExceedsTier { tier, .. }) => assert_eq!(tier, "10-49"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn targeted_papers_are_kept_and_count_against_quota() {
        let tiers = TierSet::stratification_default();
        let quotas = BTreeMap::from([("0".to_string(), 2)]);
        for seed in 0..20 {
            let s =
                stratified_sample(&zero_heavy(), &tiers, &quotas, &["z4".to_string()], seed)
                    .unwrap();
            assert_eq!(s.len(), 2);
            assert!(s.iter().any(|p| p.paper_id == "z4"));
        }
        let quotas = BTreeMap::from([("0".to_string(), 0)]);
        assert!(matches!(
            stratified_sample(&zero_heavy(), &tiers, &quotas, &["z4".to_string()], 0),
            Err(CorpusError::TargetedExceedsQuota { .. })
        ));
    }

    #[test]
    fn sample_is_independent_of_input_order() {
        let tiers = TierSet::stratification_default();
        let quotas = BTreeMap::from([("0".to_string(), 3), ("10-49".to_string(), 2)]);
        let papers = zero_heavy();
        let mut reversed = papers.clone();
        reversed.reverse();
        assert_eq!(
            stratified_sample(&papers, &tiers, &quotas, &[], 77).unwrap(),
            stratified_sample(&reversed, &tiers, &quotas, &[], 77).unwrap()
        );
    }
}
