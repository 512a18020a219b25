//! Synthetic model families with known ground truth, for checking that the
//! analyses detect an exposure effect when one exists and stay quiet when
//! it does not.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{Pipeline, PipelineError, RunConfig, StageOutcome};
use crate::corpus::PaperRecord;
use crate::grader::{aggregate_scores, grade_response, CompiledRules, ParseRules, ScoreRow};
use crate::hashing::derive_seed;
use crate::modelclient::{mock_respond, MemoryProfile, ModelSpec, Registry, RegistryEntry};
use crate::probegen::{generate_suite, ProbeSuite, ProbeType, SuiteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Recall rises with log citations.
    ExposureDriven,
    /// Recall independent of citations.
    Null,
    /// Exposure-driven, with a steeper slope for author probes and a
    /// flatter one for the title-from-abstract probes.
    AuthorBonus,
    /// Exposure slope peaks at mid-size models.
    CapacityWindow,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::ExposureDriven,
        Scenario::Null,
        Scenario::AuthorBonus,
        Scenario::CapacityWindow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::ExposureDriven => "exposure-driven",
            Scenario::Null => "null",
            Scenario::AuthorBonus => "author-bonus",
            Scenario::CapacityWindow => "capacity-window",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| PipelineError::UnknownScenario(s.to_string()))
    }
}

struct Template {
    vendor: &'static str,
    params: f64,
    coefficient: f64,
}

const STANDARD: [Template; 3] = [
    Template { vendor: "SimA", params: 3.0, coefficient: 0.02 },
    Template { vendor: "SimA", params: 8.0, coefficient: 0.025 },
    Template { vendor: "SimB", params: 14.0, coefficient: 0.015 },
];

const CAPACITY: [Template; 5] = [
    Template { vendor: "SimA", params: 0.5, coefficient: 0.005 },
    Template { vendor: "SimA", params: 3.0, coefficient: 0.03 },
    Template { vendor: "SimB", params: 8.0, coefficient: 0.028 },
    Template { vendor: "SimB", params: 30.0, coefficient: 0.008 },
    Template { vendor: "SimC", params: 70.0, coefficient: 0.012 },
];

const BASE_CORRECT: f64 = 0.2;
const AFFINITY_SD: f64 = 0.08;

fn size_label(params: f64) -> String {
    if params.fract() == 0.0 {
        format!("{params:.0}B")
    } else {
        format!("{params}B")
    }
}

/// Mock registry for a scenario. `n_models` cycles through the scenario's
/// templates; repeats get a numeric suffix.
pub fn scenario_registry(scenario: Scenario, seed: u64, n_models: Option<usize>) -> Registry {
    let templates: &[Template] = match scenario {
        Scenario::CapacityWindow => &CAPACITY,
        _ => &STANDARD,
    };
    let n = n_models.unwrap_or(templates.len());
    let models = (0..n)
        .map(|i| {
            let t = &templates[i % templates.len()];
            let round = i / templates.len();
            let mut name = format!("{}-{}", t.vendor, size_label(t.params));
            if round > 0 {
                name = format!("{name}-{}", round + 1);
            }
            let coefficient = if scenario == Scenario::Null { 0.0 } else { t.coefficient };
            let mut profile = MemoryProfile::new(
                BASE_CORRECT,
                coefficient,
                0.15,
                0.05,
                derive_seed(seed, &["noise", &name]),
            );
            profile.affinity_sd = AFFINITY_SD;
            profile.affinity_seed = derive_seed(seed, &["affinity", t.vendor]);
            if scenario == Scenario::AuthorBonus {
                profile.type_bonus = BTreeMap::from([(ProbeType::E2Author, 0.03), (ProbeType::E4Method, -0.01)]);
            }
            RegistryEntry {
                spec: ModelSpec {
                    model_name: name,
                    params_billions: t.params,
                    vendor: t.vendor.to_string(),
                    family: t.vendor.to_string(),
                    training_cutoff: "2024-12".to_string(),
                },
                endpoint: String::new(),
                mock: Some(profile),
            }
        })
        .collect();
    Registry { models }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScores {
    pub rows: Vec<ScoreRow>,
    pub specs: Vec<ModelSpec>,
}

fn score_model(
    entry: &RegistryEntry,
    suite: &ProbeSuite,
    papers: &BTreeMap<&str, &PaperRecord>,
    rules: &CompiledRules,
) -> Vec<ScoreRow> {
    let profile = entry.mock.as_ref().expect("scenario models are mocks");
    let graded: Vec<_> = suite
        .probes
        .iter()
        .map(|probe| {
            let paper = papers[probe.paper_id.as_str()];
            let response = mock_respond(profile, probe, paper, &entry.spec.model_name);
            grade_response(&response, probe, rules)
        })
        .collect();
    aggregate_scores(&graded, suite)
        .expect("graded responses cover the suite")
        .iter()
        .map(ScoreRow::from)
        .collect()
}

/// Scores every scenario model in memory, skipping response logs. Matches
/// what the file-based pipeline produces for the same seed.
pub fn simulate_scores(
    scenario: Scenario,
    corpus: &[PaperRecord],
    seed: u64,
    n_models: Option<usize>,
) -> Result<SimulatedScores, PipelineError> {
    let registry = scenario_registry(scenario, seed, n_models);
    let config = SuiteConfig {
        seed: derive_seed(seed, &["probes"]),
        ..SuiteConfig::default()
    };
    let suite = generate_suite(corpus, &config).map_err(|e| PipelineError::stage(super::Stage::GenProbes, e))?;
    let rules = CompiledRules::new(ParseRules::default()).expect("bundled rules compile");
    let papers: BTreeMap<&str, &PaperRecord> = corpus.iter().map(|p| (p.paper_id.as_str(), p)).collect();
    let per_model: Vec<Vec<ScoreRow>> = thread::scope(|s| {
        let handles: Vec<_> = registry
            .models
            .iter()
            .map(|entry| s.spawn(|| score_model(entry, &suite, &papers, &rules)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread")).collect()
    });
    Ok(SimulatedScores {
        rows: per_model.into_iter().flatten().collect(),
        specs: registry.specs(),
    })
}

/// Writes a scenario registry and run config into `out_dir` and runs the
/// full pipeline there.
pub fn simulate(
    scenario: Scenario,
    seed: u64,
    corpus: Option<&Path>,
    out_dir: &Path,
    n_models: Option<usize>,
) -> Result<Vec<StageOutcome>, PipelineError> {
    let io = |e: std::io::Error| PipelineError::Config(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir).map_err(io)?;
    let registry = scenario_registry(scenario, seed, n_models);
    let mut text = serde_json::to_string_pretty(&registry).expect("registry serializes");
    text.push('\n');
    fs::write(out_dir.join("registry.json"), text).map_err(io)?;

    let mut config = RunConfig::with_seed(seed);
    config.output_root = ".".into();
    config.corpus.path = match corpus {
        Some(p) => Some(fs::canonicalize(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    config.models.registry = Some("registry.json".into());
    config.analysis.bonferroni_tests = registry.models.len().max(1);
    fs::write(out_dir.join("run.toml"), config.to_toml()).map_err(io)?;

    config.resolve_paths(out_dir);
    Pipeline::new(config)?.run_all()
}
