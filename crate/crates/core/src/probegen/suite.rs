//! On-disk suite layout:
//!
//! * `probes.jsonl`: one [`PublicProbe`] per line, no answers.
//! * `answer_key.jsonl`: one [`AnswerKeyEntry`] per line, keyed by probe id.
//! * `suite.json`: counts, corpus hash and generation config.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldPolicy, Probe, ProbeError, ProbeSuite, ProbeType};

pub const PROBES_FILE: &str = "probes.jsonl";
pub const ANSWER_KEY_FILE: &str = "answer_key.jsonl";
pub const SUITE_FILE: &str = "suite.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub per_type: usize,
    pub distractors: usize,
    pub seed: u64,
    pub field_policy: FieldPolicy,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            per_type: 5,
            distractors: 3,
            seed: 0,
            field_policy: FieldPolicy::Fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicProbe {
    pub probe_id: String,
    pub paper_id: String,
    pub probe_type: ProbeType,
    pub stem: String,
    pub options: Vec<String>,
    pub distractor_sources: Vec<String>,
    pub rng_seed_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub probe_id: String,
    pub correct_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SuiteMeta {
    n_probes: usize,
    per_type_counts: BTreeMap<ProbeType, usize>,
    corpus_hash: String,
    config: SuiteConfig,
    fallback_draws: usize,
}

fn io(path: &Path, e: impl ToString) -> ProbeError {
    ProbeError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn jsonl<T: Serialize>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("suite records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_suite(dir: &Path, suite: &ProbeSuite) -> Result<(), ProbeError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let public = suite.probes.iter().map(|p| PublicProbe {
        probe_id: p.probe_id.clone(),
        paper_id: p.paper_id.clone(),
        probe_type: p.probe_type,
        stem: p.stem.clone(),
        options: p.options.clone(),
        distractor_sources: p.distractor_sources.clone(),
        rng_seed_used: p.rng_seed_used,
    });
    let key = suite.probes.iter().map(|p| AnswerKeyEntry {
        probe_id: p.probe_id.clone(),
        correct_index: p.correct_index,
    });
    let meta = SuiteMeta {
        n_probes: suite.probes.len(),
        per_type_counts: suite.per_type_counts.clone(),
        corpus_hash: suite.corpus_hash.clone(),
        config: suite.config.clone(),
        fallback_draws: suite.fallback_draws,
    };
    for (name, body) in [
        (PROBES_FILE, jsonl(public)),
        (ANSWER_KEY_FILE, jsonl(key)),
        (
            SUITE_FILE,
            serde_json::to_string_pretty(&meta).expect("suite meta serializes") + "\n",
        ),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ProbeError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ProbeError::Format {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Reads a suite directory, joining probes with the answer key.
pub fn read_suite(dir: &Path) -> Result<ProbeSuite, ProbeError> {
    let public: Vec<PublicProbe> = read_jsonl(&dir.join(PROBES_FILE))?;
    let key: Vec<AnswerKeyEntry> = read_jsonl(&dir.join(ANSWER_KEY_FILE))?;
    let meta_path = dir.join(SUITE_FILE);
    let meta: SuiteMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path).map_err(|e| io(&meta_path, e))?,
    )
    .map_err(|e| ProbeError::Format {
        path: meta_path.display().to_string(),
        message: e.to_string(),
    })?;
    let key: BTreeMap<String, usize> = key
        .into_iter()
        .map(|k| (k.probe_id, k.correct_index))
        .collect();
    let mut probes = Vec::with_capacity(public.len());
    for p in public {
        let correct_index = *key.get(&p.probe_id).ok_or_else(|| ProbeError::Format {
            path: dir.join(ANSWER_KEY_FILE).display().to_string(),
            message: format!("no answer for probe {}", p.probe_id),
        })?;
        let probe = Probe {
            probe_id: p.probe_id,
            paper_id: p.paper_id,
            probe_type: p.probe_type,
            stem: p.stem,
            options: p.options,
            correct_index,
            distractor_sources: p.distractor_sources,
            rng_seed_used: p.rng_seed_used,
        };
        probe.validate()?;
        probes.push(probe);
    }
    if probes.len() != meta.n_probes || key.len() != meta.n_probes {
        return Err(ProbeError::Format {
            path: meta_path.display().to_string(),
            message: format!(
                "suite declares {} probes, found {} probes and {} answers",
                meta.n_probes,
                probes.len(),
                key.len()
            ),
        });
    }
    Ok(ProbeSuite {
        probes,
        per_type_counts: meta.per_type_counts,
        corpus_hash: meta.corpus_hash,
        config: meta.config,
        fallback_draws: meta.fallback_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::paper;
    use crate::probegen::generate_suite;

    #[test]
    fn suite_files_round_trip_and_hide_answers() {
        let papers: Vec<_> = (0..8)
            .map(|i| {
                let mut p = paper(&format!("p{i}"), 2023 + (i % 2) as i32, i, &["ml"]);
                p.venue = ["ICML", "UAI", "AISTATS", "CVPR"][i as usize % 4].into();
                p
            })
            .collect();
        let suite = generate_suite(&papers, &SuiteConfig { per_type: 2, seed: 4, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_suite(dir.path(), &suite).unwrap();
        let public = fs::read_to_string(dir.path().join(PROBES_FILE)).unwrap();
        assert!(!public.contains("correct_index"));
        assert_eq!(read_suite(dir.path()).unwrap(), suite);
    }
}
