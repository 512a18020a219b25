//! `memprobe`: command-line driver for the probing pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 stage failure, 3 stale artifact.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use memprobe_core::corpus::{CitationSource, FixtureCitations, HttpCitations};
use memprobe_core::modelclient::{
    evaluate_model, ClockMode, Endpoint, EvalConfig, HttpEndpoint, MemoryProfile, MockEndpoint, Registry,
};
use memprobe_core::pipeline::{
    analyze_scores, generate_probes, grade_responses_dir, ingest_corpus, log_file_name, render_report, simulate,
    CorpusInput, EndpointKind, Pipeline, PipelineError, RunConfig, Scenario, Stage, StageStatus, CORPUS_SUMMARY_FILE,
};
use memprobe_core::probegen::{read_suite, FieldPolicy};
use memprobe_core::retry::RetryPolicy;
use memprobe_core::stats::Sidedness;
use tracing::info;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "memprobe", version, about = "Probe language-model memory of papers against citation counts")]
struct Cli {
    /// Run configuration (TOML). Flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus, optionally refresh citation counts, write it out.
    Ingest(IngestArgs),
    /// Generate the multiple-choice probe suite.
    GenProbes(GenProbesArgs),
    /// Query one model with every probe, resuming a partial log.
    Evaluate(EvaluateArgs),
    /// Grade response logs into a score table.
    Grade(GradeArgs),
    /// Run every analysis over a score table.
    Analyze(AnalyzeArgs),
    /// Render the summary and plot tables.
    Report(ReportArgs),
    /// Run a synthetic scenario through the full pipeline.
    Simulate(SimulateArgs),
    /// Run pipeline stages under one output root.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Corpus file; the bundled demo corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Refresh citation counts before writing.
    #[arg(long)]
    fetch_citations: bool,
    /// Read citation bodies from `{dir}/{paper_id}.json` instead of HTTP.
    #[arg(long, requires = "fetch_citations")]
    fixtures: Option<PathBuf>,
    /// Citation service base URL.
    #[arg(long, default_value = HttpCitations::DEFAULT_BASE)]
    citation_url: String,
    /// Date stamped on refreshed counts (YYYY-MM-DD).
    #[arg(long)]
    snapshot: Option<NaiveDate>,
    /// Print the corpus summary to stdout.
    #[arg(long)]
    summary: bool,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldPolicyArg {
    Strict,
    Fallback,
}

#[derive(Debug, Args)]
struct GenProbesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    per_type: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    field_policy: Option<FieldPolicyArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["endpoint", "mock"]))]
struct EvaluateArgs {
    #[arg(long)]
    probes: PathBuf,
    /// Registry name of the model.
    #[arg(long)]
    model: String,
    /// Chat-completions base URL, e.g. http://localhost:8000/v1. The bearer
    /// token is read from MEMPROBE_API_KEY.
    #[arg(long)]
    endpoint: Option<String>,
    /// Mock memory profile (JSON) to answer instead of a server.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Corpus the probes were generated from; required with --mock.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    max_attempts: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradeArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    probes: PathBuf,
    /// Parse rules (JSON); the bundled rules when omitted.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SidednessArg {
    OneSided,
    TwoSided,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// `default9`, `strata7` or comma-separated lower bounds.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    bonferroni_tests: Option<usize>,
    /// Sidedness of the sign-consistency binomial test.
    #[arg(long, value_enum)]
    sidedness: Option<SidednessArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    analysis: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// exposure-driven, null, author-bonus or capacity-window.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus file; the bundled demo corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Number of mock models; the scenario's own set when omitted.
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EndpointKindArg {
    Mock,
    Http,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_root: Option<PathBuf>,
    /// Comma-separated stages; all when omitted.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Comma-separated registry models to run.
    #[arg(long, value_delimiter = ',')]
    select: Vec<String>,
    #[arg(long, value_enum)]
    endpoint_kind: Option<EndpointKindArg>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    per_type: Option<usize>,
    #[arg(long)]
    concurrency: Option<usize>,
}

/// Bad flags or configuration; exit 1.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        return p.exit_code() as u8;
    }
    if e.is::<UsageError>() {
        1
    } else {
        2
    }
}

/// Config from `--config`, or `None`.
fn load_config(path: Option<&Path>) -> Result<Option<RunConfig>> {
    path.map(|p| RunConfig::load(p).map_err(anyhow::Error::from)).transpose()
}

/// `--config` when given, else defaults with a seed that must come from a
/// flag.
fn config_or_seed(config: Option<RunConfig>, seed: Option<u64>) -> Result<RunConfig> {
    match (config, seed) {
        (Some(mut c), seed) => {
            if let Some(s) = seed {
                c.seed = s;
            }
            Ok(c)
        }
        (None, Some(s)) => Ok(RunConfig::with_seed(s)),
        (None, None) => Err(usage("a seed is required: pass --seed or a --config with `seed`")),
    }
}

fn out_dir(out: Option<PathBuf>, config: Option<&RunConfig>, stage: Stage) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = config.map(|c| c.output_root.clone()).unwrap_or_else(|| PathBuf::from("memprobe-out"));
        root.join(stage.dir_name())
    })
}

fn registry(path: Option<&Path>, config: Option<&RunConfig>) -> Result<Registry> {
    match (path, config) {
        (Some(p), _) => Registry::load(p).map_err(|e| usage(e.to_string())),
        (None, Some(c)) => Ok(c.registry()?),
        (None, None) => Ok(Registry::reference_models()),
    }
}

fn cmd_ingest(a: IngestArgs, config: Option<RunConfig>) -> Result<()> {
    let corpus = a.corpus.or_else(|| config.as_ref().and_then(|c| c.corpus.path.clone()));
    let input = corpus.map(CorpusInput::File).unwrap_or(CorpusInput::Demo);
    let concurrency = a.concurrency.or(config.as_ref().map(|c| c.concurrency)).unwrap_or(16);
    let out = out_dir(a.out, config.as_ref(), Stage::Ingest);
    let source: Option<Box<dyn CitationSource>> = if a.fetch_citations {
        let snapshot = a
            .snapshot
            .or(config.as_ref().and_then(|c| c.corpus.citation_snapshot))
            .ok_or_else(|| usage("--fetch-citations needs --snapshot YYYY-MM-DD"))?;
        Some(match a.fixtures {
            Some(dir) => Box::new(FixtureCitations::new(dir, snapshot)),
            None => Box::new(HttpCitations::new(&a.citation_url, snapshot, RetryPolicy::default())),
        })
    } else {
        None
    };
    let summary = ingest_corpus(&input, source.as_deref(), concurrency, &out)?;
    info!(out = %out.display(), "wrote corpus");
    if a.summary {
        let text = std::fs::read_to_string(out.join(CORPUS_SUMMARY_FILE))
            .with_context(|| format!("reading {CORPUS_SUMMARY_FILE}"))?;
        print!("{text}");
    } else {
        println!("{} papers written to {}", summary.n_papers, out.display());
    }
    Ok(())
}

fn cmd_gen_probes(a: GenProbesArgs, config: Option<RunConfig>) -> Result<()> {
    let mut c = config_or_seed(config, a.seed)?;
    if let Some(n) = a.per_type {
        c.probes.per_type = n;
    }
    if let Some(n) = a.distractors {
        c.probes.distractors = n;
    }
    if let Some(p) = a.field_policy {
        c.probes.field_policy = match p {
            FieldPolicyArg::Strict => FieldPolicy::Strict,
            FieldPolicyArg::Fallback => FieldPolicy::Fallback,
        };
    }
    if a.seed.is_some() {
        c.probes.seed = a.seed;
    }
    let out = out_dir(a.out, Some(&c), Stage::GenProbes);
    generate_probes(&a.corpus, &c.suite_config(), &out)?;
    println!("probe suite written to {}", out.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, config: Option<RunConfig>) -> Result<()> {
    let c = config.as_ref();
    let registry = registry(a.registry.as_deref(), c)?;
    let entry = registry
        .get(&a.model)
        .ok_or_else(|| usage(format!("model {} is not in the registry", a.model)))?;
    let suite = read_suite(&a.probes).map_err(|e| PipelineError::MissingArtifact {
        stage: Stage::Evaluate,
        path: format!("{}: {e}", a.probes.display()),
    })?;
    let (endpoint, clock): (Box<dyn Endpoint>, ClockMode) = match (&a.endpoint, &a.mock) {
        (Some(url), _) => (Box::new(HttpEndpoint::new(url, &entry.spec.model_name)), ClockMode::System),
        (None, Some(profile_path)) => {
            let text = std::fs::read_to_string(profile_path)
                .map_err(|e| usage(format!("{}: {e}", profile_path.display())))?;
            let profile: MemoryProfile =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", profile_path.display())))?;
            profile.validate().map_err(usage)?;
            let corpus = a.corpus.as_ref().ok_or_else(|| usage("--mock needs --corpus"))?;
            let papers = memprobe_core::corpus::load_corpus(corpus).map_err(|e| usage(e.to_string()))?;
            (Box::new(MockEndpoint::new(profile, &papers)), ClockMode::epoch())
        }
        (None, None) => unreachable!("clap requires --endpoint or --mock"),
    };
    let defaults = c.cloned().unwrap_or_else(|| RunConfig::with_seed(0));
    let eval = EvalConfig {
        template_id: a.template.unwrap_or(defaults.models.template),
        max_tokens: a.max_tokens.unwrap_or(defaults.models.max_tokens),
        concurrency: a.concurrency.unwrap_or(defaults.concurrency),
        retry: RetryPolicy {
            max_attempts: a.max_attempts.unwrap_or(defaults.models.max_attempts),
            ..RetryPolicy::default()
        },
        clock,
    };
    let out = out_dir(a.out, c, Stage::Evaluate);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let log = out.join(log_file_name(&a.model));
    let summary = evaluate_model(endpoint.as_ref(), &entry.spec, &suite, &eval, &log, None).map_err(|e| {
        PipelineError::Stage {
            stage: Stage::Evaluate,
            message: e.to_string(),
        }
    })?;
    println!(
        "{}: {} probes ({} resumed, {} queried, {} transport errors) -> {}",
        a.model,
        summary.n_probes,
        summary.n_resumed,
        summary.n_queried,
        summary.n_transport_errors,
        log.display()
    );
    Ok(())
}

fn cmd_grade(a: GradeArgs, config: Option<RunConfig>) -> Result<()> {
    let rules = match (&a.rules, &config) {
        (Some(p), _) => memprobe_core::grader::ParseRules::load(p).map_err(|e| usage(e.to_string()))?,
        (None, Some(c)) => c.parse_rules()?,
        (None, None) => memprobe_core::grader::ParseRules::default(),
    };
    let out = out_dir(a.out, config.as_ref(), Stage::Grade);
    let rows = grade_responses_dir(&a.responses, &a.probes, &rules, &out)?;
    println!("{} score rows written to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs, config: Option<RunConfig>) -> Result<()> {
    let registry = registry(a.registry.as_deref(), config.as_ref())?;
    let mut c = config.clone().unwrap_or_else(|| RunConfig::with_seed(0));
    if let Some(b) = a.bins {
        c.analysis.bins = b;
    }
    if let Some(n) = a.bonferroni_tests {
        c.analysis.bonferroni_tests = n;
    }
    if let Some(s) = a.sidedness {
        c.analysis.sidedness = match s {
            SidednessArg::OneSided => Sidedness::OneSidedGreater,
            SidednessArg::TwoSided => Sidedness::TwoSided,
        };
    }
    let mut options = c.analysis_options()?;
    if config.is_some() {
        options.config_digest = c.digest();
    }
    let out = out_dir(a.out, config.as_ref(), Stage::Analyze);
    let report = analyze_scores(&a.scores, &a.corpus, &registry.specs(), options, &out)?;
    println!(
        "analysis of {} papers x {} models written to {}",
        report.run_metadata.n_papers,
        report.run_metadata.n_models,
        out.display()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs, config: Option<RunConfig>) -> Result<()> {
    let out = out_dir(a.out, config.as_ref(), Stage::Report);
    render_report(&a.analysis, &out)?;
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, config: Option<RunConfig>) -> Result<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let seed = config_or_seed(config, a.seed)?.seed;
    let outcomes = simulate(scenario, seed, a.corpus.as_deref(), &a.out, a.models)?;
    print_outcomes(&outcomes);
    Ok(())
}

fn cmd_run(a: RunArgs, config: Option<RunConfig>) -> Result<()> {
    let mut c = config_or_seed(config, a.seed)?;
    if let Some(root) = a.output_root {
        c.output_root = root;
    }
    if let Some(p) = a.corpus {
        c.corpus.path = Some(p);
    }
    if let Some(p) = a.registry {
        c.models.registry = Some(p);
    }
    if !a.select.is_empty() {
        c.models.select = a.select;
    }
    if let Some(k) = a.endpoint_kind {
        c.models.endpoint = match k {
            EndpointKindArg::Mock => EndpointKind::Mock,
            EndpointKindArg::Http => EndpointKind::Http,
        };
    }
    if let Some(p) = a.rules {
        c.grader.rules = Some(p);
    }
    if let Some(b) = a.bins {
        c.analysis.bins = b;
    }
    if let Some(n) = a.per_type {
        c.probes.per_type = n;
    }
    if let Some(n) = a.concurrency {
        c.concurrency = n;
    }
    let stages = if a.stages.is_empty() {
        Stage::ALL.to_vec()
    } else {
        a.stages.iter().map(|s| s.parse()).collect::<Result<Vec<Stage>, _>>()?
    };
    let outcomes = Pipeline::new(c)?.run(&stages)?;
    print_outcomes(&outcomes);
    Ok(())
}

fn print_outcomes(outcomes: &[memprobe_core::pipeline::StageOutcome]) {
    for o in outcomes {
        let status = match o.status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "up to date",
        };
        println!("{:<10} {:<10} {}", o.stage.as_str(), status, o.dir.display());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, config),
        Command::GenProbes(a) => cmd_gen_probes(a, config),
        Command::Evaluate(a) => cmd_evaluate(a, config),
        Command::Grade(a) => cmd_grade(a, config),
        Command::Analyze(a) => cmd_analyze(a, config),
        Command::Report(a) => cmd_report(a, config),
        Command::Simulate(a) => cmd_simulate(a, config),
        Command::Run(a) => cmd_run(a, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("MEMPROBE_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&usage("x")), 1);
        assert_eq!(exit_code(&anyhow!("io")), 2);
        let stale = PipelineError::StaleArtifact {
            stage: Stage::Analyze,
            path: "p".into(),
            expected: "a".into(),
            actual: "b".into(),
        };
        assert_eq!(exit_code(&stale.into()), 3);
    }

    #[test]
    fn seed_comes_from_flag_or_config() {
        assert!(config_or_seed(None, None).is_err());
        assert_eq!(config_or_seed(None, Some(4)).unwrap().seed, 4);
        assert_eq!(config_or_seed(Some(RunConfig::with_seed(1)), Some(9)).unwrap().seed, 9);
    }
}
