use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProbeError, ProbeType};
use crate::corpus::PaperRecord;

/// Case-folded, whitespace-collapsed option text used for equality checks.
pub fn normalize_option(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CasingStyle {
    /// Every significant word starts upper-case.
    TitleCase,
    /// Starts upper-case, some significant word does not.
    SentenceCase,
    LowerInitial,
    NoLetters,
}

const MINOR_WORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "by", "for", "from", "in", "into", "of", "on", "or", "the",
    "to", "via", "with", "vs",
];

pub fn casing_style(text: &str) -> CasingStyle {
    let Some(first) = text.chars().find(|c| c.is_alphabetic()) else {
        return CasingStyle::NoLetters;
    };
    if first.is_lowercase() {
        return CasingStyle::LowerInitial;
    }
    let all_significant_upper = text
        .split_whitespace()
        .filter(|w| !MINOR_WORDS.contains(&w.to_lowercase().as_str()))
        .filter_map(|w| w.chars().find(|c| c.is_alphabetic()))
        .all(char::is_uppercase);
    if all_significant_upper {
        CasingStyle::TitleCase
    } else {
        CasingStyle::SentenceCase
    }
}

fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Distractors must be within half the correct option's token count and
/// share its casing style.
#[cfg(test)]
fn format_matches(correct: &str, candidate: &str) -> bool {
    TextKey::new(correct).format_matches(&TextKey::new(candidate))
}

/// Precomputed comparison keys of one option text.
#[derive(Debug, Clone, PartialEq)]
struct TextKey {
    normalized: String,
    tokens: usize,
    casing: CasingStyle,
}

impl TextKey {
    fn new(text: &str) -> Self {
        Self {
            normalized: normalize_option(text),
            tokens: token_count(text),
            casing: casing_style(text),
        }
    }

    fn format_matches(&self, candidate: &TextKey) -> bool {
        let c = self.tokens as f64;
        let d = candidate.tokens as f64;
        (d - c).abs() <= 0.5 * c && self.casing == candidate.casing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub text: String,
    /// Papers whose metadata produced this text.
    pub sources: Vec<String>,
    pub field_tags: BTreeSet<String>,
}

impl PoolEntry {
    /// Reference recorded in `Probe::distractor_sources`.
    pub fn source_ref(&self) -> String {
        if self.sources.len() == 1 {
            self.sources[0].clone()
        } else {
            format!("pool:{}", self.text)
        }
    }
}

/// How strictly distractors must share a field with the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FieldPolicy {
    /// Same-field only; error when infeasible.
    Strict,
    /// Same-field first, then corpus-wide, with a warning.
    #[default]
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistractorPool {
    probe_type: ProbeType,
    entries: Vec<PoolEntry>,
    keys: Vec<TextKey>,
}

impl DistractorPool {
    /// One entry per distinct normalized answer text across `papers`:
    /// titles for E1/E4, author lists for E2, venue-year pairs for F1.
    pub fn build(papers: &[PaperRecord], probe_type: ProbeType) -> Self {
        let mut merged: BTreeMap<String, PoolEntry> = BTreeMap::new();
        for p in papers {
            let text = probe_type.answer_text(p);
            let entry = merged.entry(normalize_option(&text)).or_insert_with(|| PoolEntry {
                text,
                sources: Vec::new(),
                field_tags: BTreeSet::new(),
            });
            entry.sources.push(p.paper_id.clone());
            entry.field_tags.extend(p.field_tags.iter().cloned());
        }
        let entries: Vec<PoolEntry> = merged.into_values().collect();
        let keys = entries.iter().map(|e| TextKey::new(&e.text)).collect();
        Self {
            probe_type,
            entries,
            keys,
        }
    }

    pub fn probe_type(&self) -> ProbeType {
        self.probe_type
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Candidate sets in order of preference, each tagged with the warning
    /// emitted when it is the one used.
    fn candidate_tiers<'a>(
        &'a self,
        target: &'a PaperRecord,
        correct: &str,
        policy: FieldPolicy,
    ) -> Vec<(Vec<&'a PoolEntry>, Option<String>)> {
        let own = TextKey::new(correct);
        let eligible: Vec<(&PoolEntry, &TextKey)> = self
            .entries
            .iter()
            .zip(&self.keys)
            .filter(|(e, k)| k.normalized != own.normalized && !e.sources.iter().any(|s| s == &target.paper_id))
            .collect();
        let same_field = |e: &(&PoolEntry, &TextKey)| target.field_tags.iter().any(|t| e.0.field_tags.contains(t));
        let fmt = |e: &(&PoolEntry, &TextKey)| own.format_matches(e.1);
        let pick = |f: &dyn Fn(&(&PoolEntry, &TextKey)) -> bool| {
            eligible.iter().filter(|e| f(e)).map(|e| e.0).collect::<Vec<_>>()
        };
        let all: Vec<&PoolEntry> = eligible.iter().map(|e| e.0).collect();
        let id = &target.paper_id;
        let mut tiers = vec![
            (pick(&|e| same_field(e) && fmt(e)), None),
            (
                pick(&same_field),
                Some(format!("{id}: same-field draw ignores the length/casing match")),
            ),
        ];
        if policy == FieldPolicy::Fallback {
            tiers.push((
                pick(&fmt),
                Some(format!("{id}: same-field pool infeasible, drawing corpus-wide")),
            ));
            tiers.push((
                all.clone(),
                Some(format!("{id}: drawing corpus-wide without the length/casing match")),
            ));
        }
        tiers
    }

    /// True when a strict same-field draw of `k` distractors is possible.
    pub fn feasible(&self, target: &PaperRecord, k: usize, policy: FieldPolicy) -> bool {
        let correct = self.probe_type.answer_text(target);
        self.candidate_tiers(target, &correct, policy)
            .iter()
            .any(|(c, _)| c.len() >= k)
    }

    /// Draws `k` distinct distractors for `target`, never its own answer.
    pub fn draw<'a>(
        &'a self,
        target: &'a PaperRecord,
        correct: &str,
        k: usize,
        policy: FieldPolicy,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<&'a PoolEntry>, Vec<String>), ProbeError> {
        let tiers = self.candidate_tiers(target, correct, policy);
        let mut best = 0;
        for (candidates, warning) in tiers {
            best = best.max(candidates.len());
            if candidates.len() >= k {
                let drawn: Vec<&PoolEntry> = candidates.choose_multiple(rng, k).copied().collect();
                return Ok((drawn, warning.into_iter().collect()));
            }
        }
        Err(ProbeError::PoolTooSmall {
            paper_id: target.paper_id.clone(),
            tag: target.field_tags.join("|"),
            available: best,
            needed: k,
        })
    }
}
