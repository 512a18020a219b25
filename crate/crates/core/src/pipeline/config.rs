use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stages::EvaluateOptions;
use super::{PipelineError, Stage};
use crate::corpus::TierSet;
use crate::grader::ParseRules;
use crate::hashing::{derive_seed, sha256_hex};
use crate::modelclient::{ClockMode, EvalConfig, Registry, DEFAULT_TEMPLATE, TEMPLATES};
use crate::probegen::{FieldPolicy, SuiteConfig};
use crate::report::AnalysisOptions;
use crate::retry::RetryPolicy;
use crate::stats::{validate_groups, Sidedness, SizeGroup, ZeroPolicy, DEFAULT_BONFERRONI_TESTS};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Newline-delimited JSON corpus; the bundled demo corpus when absent.
    pub path: Option<PathBuf>,
    /// Directory of `{paper_id}.json` citation bodies used to refresh counts.
    pub citation_fixtures: Option<PathBuf>,
    /// Date stamped on refreshed counts; required with `citation_fixtures`.
    pub citation_snapshot: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub per_type: usize,
    pub distractors: usize,
    pub field_policy: FieldPolicy,
    /// Defaults to a value derived from the run seed.
    pub seed: Option<u64>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self {
            per_type: s.per_type,
            distractors: s.distractors,
            field_policy: s.field_policy,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointKind {
    /// In-process simulated models.
    #[default]
    Mock,
    /// OpenAI-compatible chat-completions servers.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsSection {
    /// JSON registry; the bundled reference models when absent.
    pub registry: Option<PathBuf>,
    pub endpoint: EndpointKind,
    /// Subset of registry models to run, in this order; all when empty.
    pub select: Vec<String>,
    pub template: String,
    pub max_tokens: u32,
    pub max_attempts: u32,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            registry: None,
            endpoint: EndpointKind::Mock,
            select: Vec::new(),
            template: DEFAULT_TEMPLATE.to_string(),
            max_tokens: 128,
            max_attempts: RetryPolicy::default().max_attempts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraderSection {
    /// JSON parse rules; the bundled rules when absent.
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// `default9`, `strata7` or comma-separated lower bounds.
    pub bins: String,
    pub bonferroni_tests: usize,
    pub sidedness: Sidedness,
    pub zero_policy: ZeroPolicy,
    pub size_groups: Option<Vec<SizeGroup>>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            bins: "default9".into(),
            bonferroni_tests: DEFAULT_BONFERRONI_TESTS,
            sidedness: Sidedness::default(),
            zero_policy: ZeroPolicy::default(),
            size_groups: None,
        }
    }
}

fn default_output_root() -> PathBuf {
    PathBuf::from("memprobe-out")
}

fn default_concurrency() -> usize {
    16
}

/// One pipeline run. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_root")]
    pub output_root: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub probes: ProbeSection,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub grader: GraderSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn presence(p: &Option<PathBuf>) -> bool {
    p.is_some()
}

impl RunConfig {
    /// A config with every default and the given seed.
    pub fn with_seed(seed: u64) -> Self {
        toml::from_str(&format!("seed = {seed}")).expect("minimal config parses")
    }

    /// Parses TOML; relative paths are taken relative to `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.resolve_paths(base_dir);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.path);
        resolve(base, &mut self.corpus.citation_fixtures);
        resolve(base, &mut self.models.registry);
        resolve(base, &mut self.grader.rules);
        if self.output_root.is_relative() {
            self.output_root = base.join(&self.output_root);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (name, p) in [
            ("corpus.path", &self.corpus.path),
            ("models.registry", &self.models.registry),
            ("grader.rules", &self.grader.rules),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return bad(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        if let Some(d) = &self.corpus.citation_fixtures {
            if !d.is_dir() {
                return bad(format!("corpus.citation_fixtures: {} is not a directory", d.display()));
            }
            if self.corpus.citation_snapshot.is_none() {
                return bad("corpus.citation_snapshot is required with corpus.citation_fixtures".into());
            }
        }
        if self.probes.per_type == 0 || self.probes.distractors == 0 {
            return bad("probes.per_type and probes.distractors must be positive".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be positive".into());
        }
        if self.models.max_attempts == 0 {
            return bad("models.max_attempts must be positive".into());
        }
        if !TEMPLATES.iter().any(|t| t.0 == self.models.template) {
            return bad(format!("unknown prompt template {}", self.models.template));
        }
        self.analysis_options()?;
        let registry = self.registry()?;
        for name in self.model_order()? {
            let entry = registry.get(&name).expect("model_order checks membership");
            if self.models.endpoint == EndpointKind::Http && entry.endpoint.is_empty() {
                return bad(format!("model {name} has no endpoint URL"));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<Registry, PipelineError> {
        match &self.models.registry {
            Some(p) => Registry::load(p).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(Registry::reference_models()),
        }
    }

    /// Selected model names in run order.
    pub fn model_order(&self) -> Result<Vec<String>, PipelineError> {
        let registry = self.registry()?;
        if self.models.select.is_empty() {
            return Ok(registry.models.iter().map(|m| m.spec.model_name.clone()).collect());
        }
        for name in &self.models.select {
            if registry.get(name).is_none() {
                return Err(PipelineError::Config(format!("model {name} is not in the registry")));
            }
        }
        Ok(self.models.select.clone())
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            per_type: self.probes.per_type,
            distractors: self.probes.distractors,
            seed: self.probes.seed.unwrap_or_else(|| derive_seed(self.seed, &["probes"])),
            field_policy: self.probes.field_policy,
        }
    }

    pub fn evaluate_options(&self) -> Result<EvaluateOptions, PipelineError> {
        Ok(EvaluateOptions {
            registry: self.registry()?,
            models: self.model_order()?,
            endpoint: self.models.endpoint,
            seed: self.seed,
            eval: EvalConfig {
                template_id: self.models.template.clone(),
                max_tokens: self.models.max_tokens,
                concurrency: self.concurrency,
                retry: RetryPolicy {
                    max_attempts: self.models.max_attempts,
                    ..RetryPolicy::default()
                },
                clock: match self.models.endpoint {
                    EndpointKind::Mock => ClockMode::epoch(),
                    EndpointKind::Http => ClockMode::System,
                },
            },
        })
    }

    pub fn parse_rules(&self) -> Result<ParseRules, PipelineError> {
        match &self.grader.rules {
            Some(p) => ParseRules::load(p).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(ParseRules::default()),
        }
    }

    pub fn analysis_options(&self) -> Result<AnalysisOptions, PipelineError> {
        let bins = TierSet::parse_named(&self.analysis.bins).map_err(|e| PipelineError::Config(e.to_string()))?;
        let size_groups = self.analysis.size_groups.clone().unwrap_or_else(SizeGroup::default_groups);
        validate_groups(&size_groups).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(AnalysisOptions {
            bins,
            size_groups,
            sidedness: self.analysis.sidedness,
            zero_policy: self.analysis.zero_policy,
            bonferroni_tests: self.analysis.bonferroni_tests,
            ..AnalysisOptions::default()
        })
    }

    /// Settings that shape a stage's output. Paths are excluded; the files
    /// they name are hashed as stage inputs instead.
    pub fn stage_digest(&self, stage: Stage) -> String {
        let v = match stage {
            Stage::Ingest => json!({
                "citation_fixtures": presence(&self.corpus.citation_fixtures),
                "citation_snapshot": self.corpus.citation_snapshot,
            }),
            Stage::GenProbes => json!({"suite": self.suite_config()}),
            Stage::Evaluate => json!({
                "seed": self.seed,
                "endpoint": self.models.endpoint,
                "select": self.models.select,
                "template": self.models.template,
                "max_tokens": self.models.max_tokens,
            }),
            Stage::Grade => json!({"select": self.models.select}),
            Stage::Analyze => json!({"analysis": self.analysis}),
            Stage::Report => json!({}),
        };
        sha256_hex(format!("{}:{v}", stage.as_str()).as_bytes())
    }

    /// Digest of every stage's settings.
    pub fn digest(&self) -> String {
        let all: Vec<String> = Stage::ALL.iter().map(|&s| self.stage_digest(s)).collect();
        sha256_hex(all.join(",").as_bytes())
    }

    /// Files outside the output root that a stage reads.
    pub fn external_inputs(&self, stage: Stage) -> Vec<(String, PathBuf)> {
        let mut out = Vec::new();
        match stage {
            Stage::Ingest => {
                if let Some(p) = &self.corpus.path {
                    out.push(("external/corpus".to_string(), p.clone()));
                }
            }
            Stage::Evaluate | Stage::Analyze => {
                if let Some(p) = &self.models.registry {
                    out.push(("external/registry".to_string(), p.clone()));
                }
            }
            Stage::Grade => {
                if let Some(p) = &self.grader.rules {
                    out.push(("external/rules".to_string(), p.clone()));
                }
            }
            Stage::GenProbes | Stage::Report => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        let err = RunConfig::from_toml_str("output_root = \"x\"", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("seed = 1\nbogus = 2", Path::new(".")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let c = RunConfig::from_toml_str(
            "seed = 3\noutput_root = \"out\"\n[corpus]\npath = \"c.jsonl\"",
            Path::new("/tmp/cfg"),
        )
        .unwrap();
        assert_eq!(c.corpus.path.as_deref(), Some(Path::new("/tmp/cfg/c.jsonl")));
        assert_eq!(c.output_root, Path::new("/tmp/cfg/out"));
    }

    #[test]
    fn digest_ignores_output_root_and_concurrency() {
        let mut a = RunConfig::with_seed(5);
        let mut b = a.clone();
        b.output_root = PathBuf::from("/elsewhere");
        b.concurrency = 2;
        assert_eq!(a.digest(), b.digest());
        a.probes.per_type = 2;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = RunConfig::with_seed(9);
        c.models.select = vec!["Qwen2.5-7B-Instruct".into()];
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
