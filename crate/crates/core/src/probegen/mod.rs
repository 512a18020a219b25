//! Multiple-choice knowledge probes about papers.
//!
//! Four probe families are generated per paper:
//!
//! | type    | asks for                                  | correct option      |
//! |---------|-------------------------------------------|---------------------|
//! | `E1_mc` | title, given authors + venue + year       | the paper's title   |
//! | `E2_mc` | authors, given the title                  | the author list     |
//! | `E4_mc` | which paper introduced a named method     | the paper's title   |
//! | `F1_mc` | venue and year, given the title           | `"{venue} {year}"`  |
//!
//! Distractors come from a [`DistractorPool`] of the same semantic category,
//! preferring papers that share a field tag with the target and options of a
//! similar length and casing style.

mod pool;
mod suite;

pub use pool::{casing_style, normalize_option, CasingStyle, DistractorPool, FieldPolicy, PoolEntry};
pub use suite::{read_suite, write_suite, AnswerKeyEntry, PublicProbe, SuiteConfig};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{corpus_hash, PaperRecord};
use crate::hashing::derive_seed;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("distractor pool too small for paper {paper_id} (field {tag}): {available} candidates, {needed} needed")]
    PoolTooSmall {
        paper_id: String,
        tag: String,
        available: usize,
        needed: usize,
    },
    #[error("pool for {pool} cannot serve a {requested} probe")]
    PoolTypeMismatch {
        pool: ProbeType,
        requested: ProbeType,
    },
    #[error("k_distractors must be 3 or 4, got {0}")]
    BadDistractorCount(usize),
    #[error("invalid probe {probe_id}: {message}")]
    InvalidProbe { probe_id: String, message: String },
    #[error("probe {probe_id} references unknown paper {paper_id}")]
    UnknownPaper { probe_id: String, paper_id: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed suite file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProbeType {
    #[serde(rename = "E1_mc")]
    E1Title,
    #[serde(rename = "E2_mc")]
    E2Author,
    #[serde(rename = "E4_mc")]
    E4Method,
    #[serde(rename = "F1_mc")]
    F1Venue,
}

impl ProbeType {
    pub const ALL: [ProbeType; 4] = [
        ProbeType::E1Title,
        ProbeType::E2Author,
        ProbeType::E4Method,
        ProbeType::F1Venue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeType::E1Title => "E1_mc",
            ProbeType::E2Author => "E2_mc",
            ProbeType::E4Method => "E4_mc",
            ProbeType::F1Venue => "F1_mc",
        }
    }

    /// The text of `paper`'s own metadata that answers this probe type.
    pub fn answer_text(self, paper: &PaperRecord) -> String {
        match self {
            ProbeType::E1Title | ProbeType::E4Method => paper.title.clone(),
            ProbeType::E2Author => paper.author_line(),
            ProbeType::F1Venue => format!("{} {}", paper.venue_display(), paper.year),
        }
    }
}

impl fmt::Display for ProbeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProbeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown probe type {s}"))
    }
}

/// One multiple-choice question with its answer key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub probe_id: String,
    pub paper_id: String,
    pub probe_type: ProbeType,
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub distractor_sources: Vec<String>,
    pub rng_seed_used: u64,
}

impl Probe {
    pub fn correct_option(&self) -> &str {
        &self.options[self.correct_index]
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |message: String| ProbeError::InvalidProbe {
            probe_id: self.probe_id.clone(),
            message,
        };
        if !(4..=5).contains(&self.options.len()) {
            return Err(bad(format!("{} options", self.options.len())));
        }
        if self.correct_index >= self.options.len() {
            return Err(bad(format!("correct_index {} out of range", self.correct_index)));
        }
        let mut seen: Vec<String> = self.options.iter().map(|o| normalize_option(o)).collect();
        seen.sort();
        seen.dedup();
        if seen.len() != self.options.len() {
            return Err(bad("options are not pairwise distinct".into()));
        }
        Ok(())
    }
}

/// Result of asking for one probe.
#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Probe(Probe),
    /// The paper cannot carry this probe type (E4 without a named method).
    Skip { paper_id: String, reason: String },
}

pub fn stem_for(paper: &PaperRecord, probe_type: ProbeType) -> String {
    match probe_type {
        ProbeType::E1Title => format!(
            "Which of the following is the title of the paper by {} published in {} {}?",
            paper.author_line(),
            paper.venue_display(),
            paper.year
        ),
        ProbeType::E2Author => {
            format!("Who are the authors of the paper \"{}\"?", paper.title)
        }
        ProbeType::E4Method => format!(
            "Which of the following papers introduced the method {}?",
            paper.method_name.as_deref().unwrap_or("")
        ),
        ProbeType::F1Venue => format!(
            "In which venue and year was the paper \"{}\" published?",
            paper.title
        ),
    }
}

/// Builds one probe about `paper`. Deterministic in all arguments.
pub fn generate_probe(
    paper: &PaperRecord,
    probe_type: ProbeType,
    pool: &DistractorPool,
    k_distractors: usize,
    rng_seed: u64,
    policy: FieldPolicy,
    probe_id: impl Into<String>,
) -> Result<(Generated, Vec<String>), ProbeError> {
    if !(3..=4).contains(&k_distractors) {
        return Err(ProbeError::BadDistractorCount(k_distractors));
    }
    if pool.probe_type() != probe_type
        && !(pool.probe_type().shares_pool_with(probe_type))
    {
        return Err(ProbeError::PoolTypeMismatch {
            pool: pool.probe_type(),
            requested: probe_type,
        });
    }
    if probe_type == ProbeType::E4Method && !paper.has_named_method {
        return Ok((
            Generated::Skip {
                paper_id: paper.paper_id.clone(),
                reason: "paper introduces no named method".into(),
            },
            Vec::new(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let correct = probe_type.answer_text(paper);
    let (drawn, warnings) = pool.draw(paper, &correct, k_distractors, policy, &mut rng)?;
    let mut options: Vec<String> = drawn.iter().map(|e| e.text.clone()).collect();
    let sources: Vec<String> = drawn.iter().map(|e| e.source_ref()).collect();
    let correct_index = rng.random_range(0..=k_distractors);
    options.insert(correct_index, correct);
    let probe = Probe {
        probe_id: probe_id.into(),
        paper_id: paper.paper_id.clone(),
        probe_type,
        stem: stem_for(paper, probe_type),
        options,
        correct_index,
        distractor_sources: sources,
        rng_seed_used: rng_seed,
    };
    probe.validate()?;
    Ok((Generated::Probe(probe), warnings))
}

impl ProbeType {
    /// E1 and E4 both draw titles.
    fn shares_pool_with(self, other: ProbeType) -> bool {
        matches!(
            (self, other),
            (ProbeType::E1Title, ProbeType::E4Method) | (ProbeType::E4Method, ProbeType::E1Title)
        )
    }
}

/// Seed under which [`shuffle_options`] leaves the option order unchanged.
pub const IDENTITY_SHUFFLE_SEED: u64 = 0;

/// Permutes the options and re-points `correct_index` at the same text.
pub fn shuffle_options(probe: &Probe, rng_seed: u64) -> Probe {
    if rng_seed == IDENTITY_SHUFFLE_SEED {
        return probe.clone();
    }
    let mut order: Vec<usize> = (0..probe.options.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let mut out = probe.clone();
    out.options = order.iter().map(|&i| probe.options[i].clone()).collect();
    out.correct_index = order
        .iter()
        .position(|&i| i == probe.correct_index)
        .expect("permutation contains every index");
    out
}

/// All probes of one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSuite {
    pub probes: Vec<Probe>,
    pub per_type_counts: BTreeMap<ProbeType, usize>,
    pub corpus_hash: String,
    pub config: SuiteConfig,
    /// Draws that fell back from same-field or format-matched candidates.
    pub fallback_draws: usize,
}

impl ProbeSuite {
    pub fn total(&self) -> usize {
        self.probes.len()
    }

    pub fn by_id(&self) -> BTreeMap<&str, &Probe> {
        self.probes.iter().map(|p| (p.probe_id.as_str(), p)).collect()
    }

    /// Checks counts, probe invariants and that every probe's correct option
    /// (and no distractor) matches its paper's metadata.
    pub fn validate(&self, papers: &[PaperRecord]) -> Result<(), ProbeError> {
        let by_id: BTreeMap<&str, &PaperRecord> =
            papers.iter().map(|p| (p.paper_id.as_str(), p)).collect();
        let mut counts = BTreeMap::new();
        for probe in &self.probes {
            probe.validate()?;
            let paper = by_id.get(probe.paper_id.as_str()).ok_or_else(|| {
                ProbeError::UnknownPaper {
                    probe_id: probe.probe_id.clone(),
                    paper_id: probe.paper_id.clone(),
                }
            })?;
            let truth = normalize_option(&probe.probe_type.answer_text(paper));
            for (i, opt) in probe.options.iter().enumerate() {
                if (normalize_option(opt) == truth) != (i == probe.correct_index) {
                    return Err(ProbeError::InvalidProbe {
                        probe_id: probe.probe_id.clone(),
                        message: format!("option {i} disagrees with the paper's metadata"),
                    });
                }
            }
            *counts.entry(probe.probe_type).or_insert(0) += 1;
        }
        if counts != self.per_type_counts {
            return Err(ProbeError::InvalidProbe {
                probe_id: "<suite>".into(),
                message: "per_type_counts disagree with probes".into(),
            });
        }
        Ok(())
    }
}

pub fn probe_id(paper_id: &str, probe_type: ProbeType, index: usize) -> String {
    format!("{paper_id}/{}/{index}", probe_type.as_str())
}

/// Generates `config.per_type` probes per paper and type.
///
/// Each probe's seed is derived from `(master_seed, paper_id, type, index)`,
/// so the suite does not depend on generation order.
pub fn generate_suite(papers: &[PaperRecord], config: &SuiteConfig) -> Result<ProbeSuite, ProbeError> {
    let title_pool = DistractorPool::build(papers, ProbeType::E1Title);
    let author_pool = DistractorPool::build(papers, ProbeType::E2Author);
    let venue_pool = DistractorPool::build(papers, ProbeType::F1Venue);
    let pool_for = |t: ProbeType| match t {
        ProbeType::E1Title | ProbeType::E4Method => &title_pool,
        ProbeType::E2Author => &author_pool,
        ProbeType::F1Venue => &venue_pool,
    };

    let mut probes = Vec::new();
    let mut per_type_counts: BTreeMap<ProbeType, usize> =
        ProbeType::ALL.iter().map(|&t| (t, 0)).collect();
    let mut fallback_draws = 0;
    for paper in papers {
        for t in ProbeType::ALL {
            for index in 0..config.per_type {
                let seed = derive_seed(config.seed, &[&paper.paper_id, t.as_str(), &index.to_string()]);
                let id = probe_id(&paper.paper_id, t, index);
                let (generated, warnings) =
                    generate_probe(paper, t, pool_for(t), config.distractors, seed, config.field_policy, id)?;
                if !warnings.is_empty() {
                    fallback_draws += 1;
                    for w in warnings {
                        tracing::debug!("{w}");
                    }
                }
                if let Generated::Probe(p) = generated {
                    *per_type_counts.get_mut(&t).expect("all types present") += 1;
                    probes.push(p);
                }
            }
        }
    }
    if fallback_draws > 0 {
        tracing::warn!("{fallback_draws} distractor draws fell back to relaxed candidate sets");
    }
    per_type_counts.retain(|_, n| *n > 0);
    Ok(ProbeSuite {
        probes,
        per_type_counts,
        corpus_hash: corpus_hash(papers),
        config: config.clone(),
        fallback_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::demo::generate_demo_corpus;
    use crate::corpus::test_support::paper;

    fn small_corpus() -> Vec<PaperRecord> {
        (0..10)
            .map(|i| {
                let mut p = paper(&format!("p{i}"), 2023, i as u64 * 7, &["ml"]);
                p.venue = ["NeurIPS", "ICML", "AISTATS", "UAI", "CVPR"][i % 5].to_string();
                p.year = 2023 + (i % 2) as i32;
                if i % 3 != 0 {
                    p.has_named_method = true;
                    p.method_name = Some(format!("Method{i}"));
                }
                p
            })
            .collect()
    }

    fn e1(corpus: &[PaperRecord], target: usize, seed: u64) -> Probe {
        let pool = DistractorPool::build(corpus, ProbeType::E1Title);
        match generate_probe(&corpus[target], ProbeType::E1Title, &pool, 3, seed, FieldPolicy::Fallback, "x")
            .unwrap()
            .0
        {
            Generated::Probe(p) => p,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn e1_probe_construction() {
        let corpus = small_corpus();
        let p = e1(&corpus, 2, 11);
        assert_eq!(p.options.len(), 4);
        assert_eq!(p.correct_option(), corpus[2].title);
        let titles: Vec<&str> = corpus.iter().map(|c| c.title.as_str()).collect();
        for (i, o) in p.options.iter().enumerate() {
            if i != p.correct_index {
                assert!(titles.contains(&o.as_str()));
                assert_ne!(o, &corpus[2].title);
            }
        }
        assert!(!p.stem.contains(&corpus[2].title));
    }

    #[test]
    fn generation_is_deterministic() {
        let corpus = small_corpus();
        assert_eq!(e1(&corpus, 4, 99), e1(&corpus, 4, 99));
    }

    #[test]
    fn method_less_paper_skips_e4() {
        let corpus = small_corpus();
        let pool = DistractorPool::build(&corpus, ProbeType::E4Method);
        let (g, _) = generate_probe(&corpus[0], ProbeType::E4Method, &pool, 3, 1, FieldPolicy::Fallback, "x").unwrap();
        assert!(matches!(g, Generated::Skip { .. }));
    }

    #[test]
    fn bad_distractor_count_rejected() {
        let corpus = small_corpus();
        let pool = DistractorPool::build(&corpus, ProbeType::E1Title);
        assert!(matches!(
            generate_probe(&corpus[1], ProbeType::E1Title, &pool, 2, 1, FieldPolicy::Fallback, "x"),
            Err(ProbeError::BadDistractorCount(2))
        ));
    }

    #[test]
    fn pool_type_mismatch_rejected() {
        let corpus = small_corpus();
        let pool = DistractorPool::build(&corpus, ProbeType::E2Author);
        assert!(matches!(
            generate_probe(&corpus[1], ProbeType::E1Title, &pool, 3, 1, FieldPolicy::Fallback, "x"),
            Err(ProbeError::PoolTypeMismatch { .. })
        ));
    }

    #[test]
    fn four_distractors_give_five_options() {
        let corpus = small_corpus();
        let pool = DistractorPool::build(&corpus, ProbeType::E2Author);
        let (g, _) = generate_probe(&corpus[5], ProbeType::E2Author, &pool, 4, 3, FieldPolicy::Fallback, "x").unwrap();
        let Generated::Probe(p) = g else { panic!() };
        assert_eq!(p.options.len(), 5);
        assert_eq!(p.correct_option(), corpus[5].author_line());
    }

    #[test]
    fn single_method_less_paper_suite_has_three_probes() {
        let mut corpus = small_corpus();
        let cfg = SuiteConfig { per_type: 1, ..SuiteConfig::default() };
        let suite = generate_suite(&corpus[..10], &cfg).unwrap();
        let only_p0 = suite.probes.iter().filter(|p| p.paper_id == "p0").count();
        assert_eq!(only_p0, 3);
        corpus.truncate(10);
        suite.validate(&corpus).unwrap();
    }

    #[test]
    fn shuffle_keeps_multiset_and_answer() {
        let corpus = small_corpus();
        let p = e1(&corpus, 3, 5);
        assert_eq!(shuffle_options(&p, IDENTITY_SHUFFLE_SEED), p);
        for seed in 1..200 {
            let s = shuffle_options(&p, seed);
            assert_eq!(s.correct_option(), p.correct_option());
            let mut a = s.options.clone();
            let mut b = p.options.clone();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shuffle_positions_are_uniform() {
        let corpus = small_corpus();
        let p = e1(&corpus, 3, 5);
        let mut hits = [0usize; 4];
        for seed in 1..=10_000 {
            hits[shuffle_options(&p, seed).correct_index] += 1;
        }
        for h in hits {
            let frac = h as f64 / 10_000.0;
            assert!((frac - 0.25).abs() <= 0.02, "{hits:?}");
        }
    }

    #[test]
    fn demo_suite_counts() {
        let corpus = generate_demo_corpus();
        let suite = generate_suite(&corpus, &SuiteConfig::default()).unwrap();
        assert_eq!(suite.per_type_counts[&ProbeType::E1Title], 2745);
        assert_eq!(suite.per_type_counts[&ProbeType::E2Author], 2745);
        assert_eq!(suite.per_type_counts[&ProbeType::E4Method], 1945);
        assert_eq!(suite.per_type_counts[&ProbeType::F1Venue], 2745);
        assert_eq!(suite.total(), 10_180);
        suite.validate(&corpus).unwrap();
    }

    #[test]
    fn e2_draws_never_include_target_authors() {
        let corpus = generate_demo_corpus();
        let pool = DistractorPool::build(&corpus, ProbeType::E2Author);
        for (i, paper) in corpus.iter().enumerate() {
            let (g, _) = generate_probe(paper, ProbeType::E2Author, &pool, 3, i as u64, FieldPolicy::Fallback, "x").unwrap();
            let Generated::Probe(p) = g else { panic!() };
            let own = normalize_option(&paper.author_line());
            let hits = p.options.iter().filter(|o| normalize_option(o) == own).count();
            assert_eq!(hits, 1);
            assert!(!p.distractor_sources.iter().any(|s| s == &paper.paper_id));
        }
    }
}
