//! Stage bodies. Each reads explicit input paths and writes into one
//! directory; the [`super::Pipeline`] adds manifests around them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tracing::{info, warn};

use super::{hash_file, EndpointKind, PipelineError, Stage};
use crate::corpus::{
    check_corpus, corpus_hash, demo::generate_demo_corpus, fetch_citations, load_corpus, summarize, write_corpus,
    CitationSource, CorpusSummary, PaperRecord,
};
use crate::grader::{grade_log, graded_log_string, read_score_table, write_score_table, ParseRules, ScoreRow};
use crate::hashing::derive_seed;
use crate::modelclient::{
    evaluate_model, Endpoint, EvalConfig, EvalSummary, HttpEndpoint, MemoryProfile, MockEndpoint, ModelSpec, Registry,
    RegistryEntry,
};
use crate::probegen::{generate_suite, read_suite, write_suite, SuiteConfig};
use crate::report::{analyze, write_analysis_dir, write_report_dir, AnalysisOptions, AnalysisReport, ANALYSIS_FILE};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CORPUS_SUMMARY_FILE: &str = "corpus_summary.json";
pub const CITATION_REPORT_FILE: &str = "citation_report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const DISTRIBUTION_FILE: &str = "grade_distribution.json";

fn require(stage: Stage, path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact {
            stage,
            path: path.display().to_string(),
        })
    }
}

fn write_json(stage: Stage, path: &Path, value: &impl serde::Serialize) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusInput {
    File(PathBuf),
    Demo,
}

/// Validates the corpus, optionally refreshes citation counts, and writes
/// it with a summary.
pub fn ingest_corpus(
    input: &CorpusInput,
    citations: Option<&dyn CitationSource>,
    concurrency: usize,
    out_dir: &Path,
) -> Result<CorpusSummary, PipelineError> {
    let stage = Stage::Ingest;
    let mut papers = match input {
        CorpusInput::File(p) => {
            require(stage, p)?;
            load_corpus(p).map_err(|e| PipelineError::stage(stage, e))?
        }
        CorpusInput::Demo => generate_demo_corpus(),
    };
    check_corpus(&papers).map_err(|e| PipelineError::stage(stage, e))?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::stage(stage, e))?;
    if let Some(source) = citations {
        let ids: Vec<String> = papers.iter().map(|p| p.paper_id.clone()).collect();
        let report = fetch_citations(source, &ids, concurrency);
        for p in &mut papers {
            if let Some(f) = report.resolved.get(&p.paper_id) {
                p.citation_count = f.citation_count;
                p.citation_snapshot_date = f.snapshot_date;
            }
        }
        if !report.failures.is_empty() {
            warn!(failures = report.failures.len(), "citation lookups failed; keeping prior counts");
        }
        write_json(stage, &out_dir.join(CITATION_REPORT_FILE), &report)?;
    }
    write_corpus(out_dir.join(CORPUS_FILE), &papers).map_err(|e| PipelineError::stage(stage, e))?;
    let summary = summarize(&papers);
    write_json(stage, &out_dir.join(CORPUS_SUMMARY_FILE), &summary)?;
    info!(papers = summary.n_papers, "corpus ingested");
    Ok(summary)
}

pub fn generate_probes(corpus_path: &Path, config: &SuiteConfig, out_dir: &Path) -> Result<(), PipelineError> {
    let stage = Stage::GenProbes;
    require(stage, corpus_path)?;
    let papers = load_corpus(corpus_path).map_err(|e| PipelineError::stage(stage, e))?;
    let suite = generate_suite(&papers, config).map_err(|e| PipelineError::stage(stage, e))?;
    suite.validate(&papers).map_err(|e| PipelineError::stage(stage, e))?;
    write_suite(out_dir, &suite).map_err(|e| PipelineError::stage(stage, e))?;
    info!(probes = suite.total(), "probe suite written");
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    pub registry: Registry,
    pub models: Vec<String>,
    pub endpoint: EndpointKind,
    pub eval: EvalConfig,
    /// Seeds default mock profiles for registry entries without one.
    pub seed: u64,
}

/// File name of a model's response log: the model name with characters
/// outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn log_file_name(model_name: &str) -> String {
    let stem: String = model_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{stem}.jsonl")
}

/// Exposure-driven profile for a registry entry that carries none.
pub fn default_mock_profile(seed: u64, spec: &ModelSpec) -> MemoryProfile {
    let mut p = MemoryProfile::new(0.25, 0.02, 0.15, 0.05, derive_seed(seed, &["noise", &spec.model_name]));
    p.affinity_sd = 0.08;
    p.affinity_seed = derive_seed(seed, &["affinity", &spec.vendor]);
    p
}

fn endpoint_for(
    entry: &RegistryEntry,
    opts: &EvaluateOptions,
    papers: &[PaperRecord],
) -> Box<dyn Endpoint> {
    match opts.endpoint {
        EndpointKind::Mock => {
            let profile = entry.mock.clone().unwrap_or_else(|| default_mock_profile(opts.seed, &entry.spec));
            Box::new(MockEndpoint::new(profile, papers))
        }
        EndpointKind::Http => Box::new(HttpEndpoint::new(&entry.endpoint, &entry.spec.model_name)),
    }
}

/// Evaluates each selected model into `{out_dir}/{model}.jsonl`, resuming
/// any partial log already there.
pub fn evaluate_models(
    corpus_path: &Path,
    probes_dir: &Path,
    opts: &EvaluateOptions,
    out_dir: &Path,
) -> Result<Vec<(String, EvalSummary)>, PipelineError> {
    let stage = Stage::Evaluate;
    require(stage, corpus_path)?;
    require(stage, probes_dir)?;
    let papers = load_corpus(corpus_path).map_err(|e| PipelineError::stage(stage, e))?;
    let suite = read_suite(probes_dir).map_err(|e| PipelineError::stage(stage, e))?;
    if suite.corpus_hash != corpus_hash(&papers) {
        return Err(PipelineError::stage(stage, "probe suite was generated from a different corpus"));
    }
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::stage(stage, e))?;
    let mut out = Vec::new();
    for name in &opts.models {
        let entry = opts
            .registry
            .get(name)
            .ok_or_else(|| PipelineError::Config(format!("model {name} is not in the registry")))?;
        let endpoint = endpoint_for(entry, opts, &papers);
        let summary = evaluate_model(
            endpoint.as_ref(),
            &entry.spec,
            &suite,
            &opts.eval,
            &out_dir.join(log_file_name(name)),
            None,
        )
        .map_err(|e| PipelineError::stage(stage, format!("{name}: {e}")))?;
        info!(model = %name, queried = summary.n_queried, resumed = summary.n_resumed, "model evaluated");
        if summary.n_transport_errors > 0 {
            warn!(model = %name, errors = summary.n_transport_errors, "transport errors recorded as ERROR");
        }
        out.push((name.clone(), summary));
    }
    Ok(out)
}

/// Grades every `*.jsonl` response log in `responses_dir` (by file name)
/// and writes graded logs, the score table and grade distributions.
pub fn grade_responses_dir(
    responses_dir: &Path,
    probes_dir: &Path,
    rules: &ParseRules,
    out_dir: &Path,
) -> Result<Vec<ScoreRow>, PipelineError> {
    let stage = Stage::Grade;
    require(stage, responses_dir)?;
    require(stage, probes_dir)?;
    let suite = read_suite(probes_dir).map_err(|e| PipelineError::stage(stage, e))?;
    let mut logs: Vec<PathBuf> = fs::read_dir(responses_dir)
        .map_err(|e| PipelineError::stage(stage, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    logs.sort();
    if logs.is_empty() {
        return Err(PipelineError::MissingArtifact {
            stage,
            path: responses_dir.join("*.jsonl").display().to_string(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::stage(stage, e))?;
    let mut rows = Vec::new();
    let mut distributions = BTreeMap::new();
    for log in &logs {
        let run = grade_log(log, &suite, rules).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", log.display())))?;
        let stem = log.file_stem().expect("jsonl file").to_string_lossy().into_owned();
        let graded_path = out_dir.join(format!("{stem}.graded.jsonl"));
        fs::write(&graded_path, graded_log_string(&run.header, &run.records))
            .map_err(|e| PipelineError::stage(stage, e))?;
        let model = run.header.response_log.model.model_name.clone();
        rows.extend(run.scores.iter().map(ScoreRow::from));
        distributions.insert(model, run.distribution);
    }
    write_score_table(&out_dir.join(SCORES_FILE), &rows).map_err(|e| PipelineError::stage(stage, e))?;
    write_json(stage, &out_dir.join(DISTRIBUTION_FILE), &distributions)?;
    Ok(rows)
}

/// Runs every analysis over a score table and writes `analysis.json` plus
/// the per-analysis tables.
pub fn analyze_scores(
    scores_path: &Path,
    corpus_path: &Path,
    specs: &[ModelSpec],
    mut options: AnalysisOptions,
    out_dir: &Path,
) -> Result<AnalysisReport, PipelineError> {
    let stage = Stage::Analyze;
    require(stage, scores_path)?;
    require(stage, corpus_path)?;
    let rows = read_score_table(scores_path).map_err(|e| PipelineError::stage(stage, e))?;
    let corpus = load_corpus(corpus_path).map_err(|e| PipelineError::stage(stage, e))?;
    options.corpus_hash = corpus_hash(&corpus);
    options.score_table_hash = hash_file(scores_path).unwrap_or_default();
    let report = analyze(&rows, &corpus, specs, &options).map_err(|e| PipelineError::stage(stage, e))?;
    write_analysis_dir(&report, out_dir).map_err(|e| PipelineError::stage(stage, e))?;
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok(report)
}

/// Renders the summary and plot tables from an analysis directory.
pub fn render_report(analysis_dir: &Path, out_dir: &Path) -> Result<AnalysisReport, PipelineError> {
    let stage = Stage::Report;
    let path = analysis_dir.join(ANALYSIS_FILE);
    require(stage, &path)?;
    let report = AnalysisReport::read(&path).map_err(|e| PipelineError::stage(stage, e))?;
    write_report_dir(&report, out_dir).map_err(|e| PipelineError::stage(stage, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_names_are_path_safe() {
        assert_eq!(log_file_name("Qwen2.5-7B-Instruct"), "Qwen2.5-7B-Instruct.jsonl");
        assert_eq!(log_file_name("org/model name"), "org_model_name.jsonl");
    }
}
