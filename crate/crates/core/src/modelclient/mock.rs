//! Simulated model whose recall rises with log citation exposure.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::prompt::option_label;
use super::{Completion, CompletionRequest, Endpoint, RawResponse, TransportError};
use crate::corpus::PaperRecord;
use crate::hashing::derive_seed;
use crate::probegen::{Probe, ProbeType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryProfile {
    pub base_correct_rate: f64,
    pub exposure_coefficient: f64,
    pub refusal_rate: f64,
    pub hallucination_rate: f64,
    pub noise_seed: u64,
    /// Added to `exposure_coefficient` for the given probe type.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub type_bonus: BTreeMap<ProbeType, f64>,
    /// Standard deviation of a per-paper recall offset independent of
    /// citations. Models sharing `affinity_seed` share the offsets.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub affinity_sd: f64,
    #[serde(default, skip_serializing_if = "is_zero_u64")]
    pub affinity_seed: u64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn is_zero_u64(x: &u64) -> bool {
    *x == 0
}

impl MemoryProfile {
    pub fn new(base: f64, coefficient: f64, refusal: f64, hallucination: f64, noise_seed: u64) -> Self {
        Self {
            base_correct_rate: base,
            exposure_coefficient: coefficient,
            refusal_rate: refusal,
            hallucination_rate: hallucination,
            noise_seed,
            type_bonus: BTreeMap::new(),
            affinity_sd: 0.0,
            affinity_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(format!("{name} = {x} outside [0, 1]"))
            }
        };
        unit("base_correct_rate", self.base_correct_rate)?;
        unit("refusal_rate", self.refusal_rate)?;
        unit("hallucination_rate", self.hallucination_rate)?;
        if self.refusal_rate + self.hallucination_rate > 1.0 + 1e-12 {
            return Err("refusal_rate + hallucination_rate exceeds 1".into());
        }
        if !self.exposure_coefficient.is_finite() || !(self.affinity_sd >= 0.0) {
            return Err("exposure_coefficient must be finite and affinity_sd non-negative".into());
        }
        Ok(())
    }

    fn affinity(&self, paper_id: &str) -> f64 {
        if self.affinity_sd == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.affinity_seed, &["affinity", paper_id]));
        let z: f64 = rng.sample(StandardNormal);
        self.affinity_sd * z
    }

    /// Probability of a correct answer for one probe.
    pub fn correct_probability(&self, probe_type: ProbeType, paper: &PaperRecord) -> f64 {
        let exposure = paper.log_citations();
        let slope = self.exposure_coefficient + self.type_bonus.get(&probe_type).copied().unwrap_or(0.0);
        let cap = (1.0 - self.refusal_rate - self.hallucination_rate).max(0.0);
        (self.base_correct_rate + slope * exposure + self.affinity(&paper.paper_id)).clamp(0.0, cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MockOutcome {
    Correct,
    Refusal,
    Hallucination,
    Wrong,
}

const REFUSALS: &[&str] = &[
    "I don't know.",
    "I don't know the answer to this question.",
    "I'm not sure which paper this refers to, so I cannot determine the answer.",
];

const FABRICATED: &[&str] = &[
    "Hierarchical Attention Graphs for Federated Reasoning",
    "Adaptive Sparse Transformers Revisited",
    "A Unified Theory of Contrastive Memory",
    "Scalable Neural Retrieval with Implicit Priors",
];

fn answer_text(letter: char, option: &str, style: u32) -> String {
    match style {
        0 => letter.to_string(),
        1 => format!("The answer is {letter}."),
        2 => format!("Answer: {letter}"),
        _ => format!("{letter}. {option}"),
    }
}

/// The outcome and output text the mock model produces for `probe`.
pub fn mock_text(profile: &MemoryProfile, probe: &Probe, paper: &PaperRecord) -> (MockOutcome, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.noise_seed, &["mock", &probe.probe_id]));
    let u: f64 = rng.random();
    let p_correct = profile.correct_probability(probe.probe_type, paper);
    let style = rng.random_range(0..4u32);
    let outcome = if u < p_correct {
        MockOutcome::Correct
    } else if u < p_correct + profile.refusal_rate {
        MockOutcome::Refusal
    } else if u < p_correct + profile.refusal_rate + profile.hallucination_rate {
        MockOutcome::Hallucination
    } else {
        MockOutcome::Wrong
    };
    let text = match outcome {
        MockOutcome::Correct => {
            let i = probe.correct_index;
            answer_text(option_label(i), &probe.options[i], style)
        }
        MockOutcome::Wrong => {
            let n = probe.options.len();
            let i = (probe.correct_index + rng.random_range(1..n)) % n;
            answer_text(option_label(i), &probe.options[i], style)
        }
        MockOutcome::Refusal => REFUSALS[rng.random_range(0..REFUSALS.len())].to_string(),
        MockOutcome::Hallucination => {
            if style % 2 == 0 {
                format!("The answer is {}.", option_label(probe.options.len()))
            } else {
                let t = FABRICATED[rng.random_range(0..FABRICATED.len())];
                format!("The answer is \"{t}\".")
            }
        }
    };
    (outcome, text)
}

/// A logged response from the mock model, stamped at the Unix epoch.
pub fn mock_respond(
    profile: &MemoryProfile,
    probe: &Probe,
    paper: &PaperRecord,
    model_name: &str,
) -> RawResponse {
    RawResponse {
        probe_id: probe.probe_id.clone(),
        model_name: model_name.to_string(),
        text: mock_text(profile, probe, paper).1,
        latency_ms: 0.0,
        transport_error: None,
        timestamp: DateTime::<Utc>::UNIX_EPOCH,
    }
}

/// In-process endpoint backed by a [`MemoryProfile`].
pub struct MockEndpoint {
    profile: MemoryProfile,
    papers: BTreeMap<String, PaperRecord>,
}

impl MockEndpoint {
    pub fn new(profile: MemoryProfile, papers: &[PaperRecord]) -> Self {
        Self {
            profile,
            papers: papers.iter().map(|p| (p.paper_id.clone(), p.clone())).collect(),
        }
    }
}

impl Endpoint for MockEndpoint {
    fn complete(&self, _request: &CompletionRequest, probe: &Probe) -> Result<Completion, TransportError> {
        let paper = self.papers.get(&probe.paper_id).ok_or_else(|| TransportError {
            message: format!("mock has no paper {}", probe.paper_id),
            retryable: false,
        })?;
        Ok(Completion {
            text: mock_text(&self.profile, probe, paper).1,
            model: None,
        })
    }
}
