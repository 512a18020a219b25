//! End-to-end orchestration: one directory per stage, each with a manifest
//! of input and output hashes so unchanged stages are skipped.
//!
//! Stages run in order: ingest, probes, responses, grades, analysis, report.
//! A stage reads only the outputs recorded in its upstream manifests and
//! refuses to run if those files changed after they were recorded.

mod config;
mod simulate;
mod stages;

pub use config::{AnalysisSection, CorpusSection, EndpointKind, GraderSection, ModelsSection, ProbeSection, RunConfig};
pub use simulate::{scenario_registry, simulate, simulate_scores, Scenario, SimulatedScores};
pub use stages::{
    analyze_scores, evaluate_models, generate_probes, grade_responses_dir, ingest_corpus, log_file_name,
    render_report, CorpusInput, EvaluateOptions, CITATION_REPORT_FILE, CORPUS_FILE, CORPUS_SUMMARY_FILE, DISTRIBUTION_FILE, SCORES_FILE,
};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::corpus::{CitationSource, FixtureCitations};
use crate::hashing::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown scenario {0}; expected one of exposure-driven, null, author-bonus, capacity-window")]
    UnknownScenario(String),
    #[error("{stage}: missing artifact {path}")]
    MissingArtifact { stage: Stage, path: String },
    #[error("{stage}: artifact {path} changed since it was recorded (expected {expected}, found {actual})")]
    StaleArtifact {
        stage: Stage,
        path: String,
        expected: String,
        actual: String,
    },
    #[error("{stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// 1 usage, 2 stage failure, 3 stale artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::UnknownScenario(_) => 1,
            PipelineError::StaleArtifact { .. } => 3,
            PipelineError::MissingArtifact { .. } | PipelineError::Stage { .. } => 2,
        }
    }

    pub(crate) fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    GenProbes,
    Evaluate,
    Grade,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::GenProbes,
        Stage::Evaluate,
        Stage::Grade,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GenProbes => "gen-probes",
            Stage::Evaluate => "evaluate",
            Stage::Grade => "grade",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    /// Directory name under the output root.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GenProbes => "probes",
            Stage::Evaluate => "responses",
            Stage::Grade => "grades",
            Stage::Analyze => "analysis",
            Stage::Report => "report",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::GenProbes => &[Stage::Ingest],
            Stage::Evaluate => &[Stage::Ingest, Stage::GenProbes],
            Stage::Grade => &[Stage::GenProbes, Stage::Evaluate],
            Stage::Analyze => &[Stage::Ingest, Stage::Grade],
            Stage::Report => &[Stage::Analyze],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {s}")))
    }
}

/// Inputs and outputs of one completed stage, by content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    /// File name in the stage directory → sha256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| PipelineError::stage(self.stage, format!("{}: {e}", path.display())))
    }
}

pub fn hash_file(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// Hashes of every regular file in `dir` except the manifest.
fn hash_outputs(stage: Stage, dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| PipelineError::stage(stage, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE || !entry.path().is_file() {
            continue;
        }
        let hash = hash_file(&entry.path()).ok_or_else(|| PipelineError::stage(stage, format!("cannot read {name}")))?;
        out.insert(name, hash);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    pub dir: PathBuf,
}

/// Runs stages of one [`RunConfig`] under its output root.
pub struct Pipeline {
    config: RunConfig,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.config.output_root.join(stage.dir_name())
    }

    /// Upstream outputs, verified against their manifests, plus external inputs.
    fn stage_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut inputs = BTreeMap::new();
        for &up in stage.upstream() {
            let dir = self.stage_dir(up);
            let manifest = Manifest::read(&dir).ok_or_else(|| PipelineError::MissingArtifact {
                stage,
                path: dir.join(MANIFEST_FILE).display().to_string(),
            })?;
            for (name, expected) in &manifest.outputs {
                let path = dir.join(name);
                let actual = hash_file(&path).ok_or_else(|| PipelineError::MissingArtifact {
                    stage,
                    path: path.display().to_string(),
                })?;
                if &actual != expected {
                    return Err(PipelineError::StaleArtifact {
                        stage,
                        path: path.display().to_string(),
                        expected: expected.clone(),
                        actual,
                    });
                }
                inputs.insert(format!("{}/{name}", up.dir_name()), actual);
            }
        }
        for (key, path) in self.config.external_inputs(stage) {
            let hash = hash_file(&path).ok_or_else(|| PipelineError::MissingArtifact {
                stage,
                path: path.display().to_string(),
            })?;
            inputs.insert(key, hash);
        }
        Ok(inputs)
    }

    fn up_to_date(dir: &Path, manifest: &Manifest, digest: &str, inputs: &BTreeMap<String, String>) -> bool {
        manifest.config_digest == digest
            && &manifest.inputs == inputs
            && manifest
                .outputs
                .iter()
                .all(|(name, h)| hash_file(&dir.join(name)).as_deref() == Some(h.as_str()))
    }

    /// Runs one stage unless its manifest shows it is already current.
    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        let dir = self.stage_dir(stage);
        let inputs = self.stage_inputs(stage)?;
        let digest = self.config.stage_digest(stage);
        if let Some(m) = Manifest::read(&dir) {
            if Self::up_to_date(&dir, &m, &digest, &inputs) {
                info!(stage = stage.as_str(), "up to date, skipping");
                return Ok(StageOutcome {
                    stage,
                    status: StageStatus::Skipped,
                    dir,
                });
            }
            // Completed under other inputs: start clean.
            fs::remove_dir_all(&dir).map_err(|e| PipelineError::stage(stage, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| PipelineError::stage(stage, e))?;
        info!(stage = stage.as_str(), dir = %dir.display(), "running");
        self.execute(stage, &dir)?;
        let manifest = Manifest {
            stage,
            config_digest: digest,
            inputs,
            outputs: hash_outputs(stage, &dir)?,
        };
        manifest.write(&dir)?;
        Ok(StageOutcome {
            stage,
            status: StageStatus::Ran,
            dir,
        })
    }

    fn execute(&self, stage: Stage, dir: &Path) -> Result<(), PipelineError> {
        let c = &self.config;
        let corpus = || self.stage_dir(Stage::Ingest).join(CORPUS_FILE);
        let probes = || self.stage_dir(Stage::GenProbes);
        match stage {
            Stage::Ingest => {
                let input = match &c.corpus.path {
                    Some(p) => CorpusInput::File(p.clone()),
                    None => CorpusInput::Demo,
                };
                let fixtures = c.corpus.citation_fixtures.as_ref().map(|d| FixtureCitations::new(d, c.corpus.citation_snapshot.expect("validated with fixtures")));
                let source = fixtures.as_ref().map(|f| f as &dyn CitationSource);
                ingest_corpus(&input, source, c.concurrency, dir)?;
            }
            Stage::GenProbes => generate_probes(&corpus(), &c.suite_config(), dir)?,
            Stage::Evaluate => {
                evaluate_models(&corpus(), &probes(), &c.evaluate_options()?, dir)?;
            }
            Stage::Grade => {
                let rules = c.parse_rules()?;
                grade_responses_dir(&self.stage_dir(Stage::Evaluate), &probes(), &rules, dir)?;
            }
            Stage::Analyze => {
                let scores = self.stage_dir(Stage::Grade).join(SCORES_FILE);
                let mut options = c.analysis_options()?;
                options.config_digest = c.digest();
                analyze_scores(&scores, &corpus(), &c.registry()?.specs(), options, dir)?;
            }
            Stage::Report => {
                render_report(&self.stage_dir(Stage::Analyze), dir)?;
            }
        }
        Ok(())
    }

    /// Runs `stages` in pipeline order.
    pub fn run(&self, stages: &[Stage]) -> Result<Vec<StageOutcome>, PipelineError> {
        let mut ordered = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        ordered.into_iter().map(|s| self.run_stage(s)).collect()
    }

    pub fn run_all(&self) -> Result<Vec<StageOutcome>, PipelineError> {
        self.run(&Stage::ALL)
    }
}
