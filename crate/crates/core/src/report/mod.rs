//! The analysis report: every analysis over one score table, plus renderers
//! for summaries and plot-ready tables.

mod render;

pub use render::{
    format_coef, format_p, render_bin_curve, render_bins_table, render_pairwise_table, render_probe_type_table,
    render_ranking_table, render_size_groups_table, render_size_vs_rho, render_summary, render_temporal_table,
    render_vendor_bars, render_vendors_table, render_year_split, write_analysis_dir, write_report_dir,
    ANALYSIS_FILE, ANALYSIS_TABLES, REPORT_FILES,
};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PaperRecord, TierSet};
use crate::grader::{ScoreRow, ERROR_RATE_WARN_THRESHOLD};
use crate::modelclient::ModelSpec;
use crate::stats::{
    bin_analysis, ensemble_observations, high_low_contrast, model_observations, model_results, overall_correlation,
    pairwise_model_agreement, probe_type_power, sign_consistency, size_group_analysis, temporal_compare,
    vendor_summary, BinAnalysis, CorrelationResult, HighLowResult, ModelResult, OverallResult, PairwiseMatrix,
    ProbeTypeAnalysis, ScoreMatrix, Sidedness, SignTestResult, SizeGroup, SizeGroupSummary, StatsError,
    TemporalResult, VendorSummary, ZeroPolicy, DEFAULT_BONFERRONI_TESTS, MIN_COHORT_PAPERS,
};

/// Cohorts smaller than this are flagged in the warnings.
pub const LOW_COHORT_WARN: usize = 30;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed analysis file {path}: {message}")]
    Parse { path: String, message: String },
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// A report section, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "SectionRepr<T>",
    try_from = "SectionRepr<T>",
    bound(serialize = "T: Clone + Serialize", deserialize = "T: Deserialize<'de>")
)]
pub enum Section<T> {
    Present { value: T },
    Skipped { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SectionStatus {
    Present,
    Skipped,
}

// Internally tagged enums buffer their content, which breaks integer map
// keys on the way back in; this flat form deserializes directly.
#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
struct SectionRepr<T> {
    status: SectionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

impl<T> From<Section<T>> for SectionRepr<T> {
    fn from(s: Section<T>) -> Self {
        match s {
            Section::Present { value } => SectionRepr {
                status: SectionStatus::Present,
                value: Some(value),
                reason: None,
            },
            Section::Skipped { reason } => SectionRepr {
                status: SectionStatus::Skipped,
                value: None,
                reason: Some(reason),
            },
        }
    }
}

impl<T> TryFrom<SectionRepr<T>> for Section<T> {
    type Error = String;

    fn try_from(r: SectionRepr<T>) -> Result<Self, String> {
        match (r.status, r.value, r.reason) {
            (SectionStatus::Present, Some(value), _) => Ok(Section::Present { value }),
            (SectionStatus::Skipped, None, Some(reason)) => Ok(Section::Skipped { reason }),
            (status, _, _) => Err(format!("section marked {status:?} has mismatched fields")),
        }
    }
}

impl<T> Section<T> {
    fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Self {
        match r {
            Ok(value) => Section::Present { value },
            Err(e) => Section::Skipped { reason: e.to_string() },
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Section::Present { value } => Some(value),
            Section::Skipped { .. } => None,
        }
    }

    pub fn skip_reason(&self) -> Option<&str> {
        match self {
            Section::Present { .. } => None,
            Section::Skipped { reason } => Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub bins: TierSet,
    pub size_groups: Vec<SizeGroup>,
    pub sidedness: Sidedness,
    pub zero_policy: ZeroPolicy,
    pub bonferroni_tests: usize,
    /// Digest of the configuration that produced the score table.
    pub config_digest: String,
    pub corpus_hash: String,
    pub score_table_hash: String,
    /// Omitted from deterministic runs.
    pub analyzed_at: Option<String>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bins: TierSet::analysis_default(),
            size_groups: SizeGroup::default_groups(),
            sidedness: Sidedness::default(),
            zero_policy: ZeroPolicy::default(),
            bonferroni_tests: DEFAULT_BONFERRONI_TESTS,
            config_digest: String::new(),
            corpus_hash: String::new(),
            score_table_hash: String::new(),
            analyzed_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_digest: String,
    pub corpus_hash: String,
    pub score_table_hash: String,
    pub citation_snapshot_date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzed_at: Option<String>,
    pub n_papers: usize,
    pub n_models: usize,
    pub bins: Vec<String>,
    pub sidedness: Sidedness,
    pub zero_policy: ZeroPolicy,
    pub bonferroni_tests: usize,
    pub cohort_validity_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub run_metadata: RunMetadata,
    pub model_ranking: Section<Vec<ModelResult>>,
    pub ensemble: Section<OverallResult>,
    pub sign_test: Section<SignTestResult>,
    /// High-low contrast on ensemble-median CORRECT rates.
    pub high_low: Section<HighLowResult>,
    /// Ensemble bins first, then the top-ranked model's.
    pub bins: Section<Vec<BinAnalysis>>,
    pub temporal: Section<TemporalResult>,
    pub probe_type: Section<ProbeTypeAnalysis>,
    pub size_groups: Section<Vec<SizeGroupSummary>>,
    pub pairwise: Section<PairwiseMatrix>,
    pub vendors: Section<Vec<VendorSummary>>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    /// Model results sorted by rho descending, ties and undefined last by name.
    pub fn ranked_models(&self) -> Vec<&ModelResult> {
        let mut v: Vec<&ModelResult> = self.model_ranking.value().map(|m| m.iter().collect()).unwrap_or_default();
        v.sort_by(|a, b| {
            let ka = a.correlation.map(|c| c.coefficient);
            let kb = b.correlation.map(|c| c.coefficient);
            match (ka, kb) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            }
            .then_with(|| a.spec.model_name.cmp(&b.spec.model_name))
        });
        v
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn with_tests(c: CorrelationResult, tests: usize) -> CorrelationResult {
    c.with_bonferroni_tests(tests)
}

/// Runs every analysis; failures become skipped sections, never errors,
/// except for a score table that does not join the corpus.
pub fn analyze(
    rows: &[ScoreRow],
    corpus: &[PaperRecord],
    specs: &[ModelSpec],
    options: &AnalysisOptions,
) -> Result<AnalysisReport, ReportError> {
    let order: Vec<String> = specs.iter().map(|s| s.model_name.clone()).collect();
    let matrix = ScoreMatrix::build(rows, corpus, &order)?;
    // Drop registry models absent from the score table.
    let present: Vec<usize> = (0..matrix.models.len())
        .filter(|&m| (0..matrix.papers.len()).any(|p| matrix.row(p, m).is_some()))
        .collect();
    let matrix = if present.len() == matrix.models.len() {
        matrix
    } else {
        let keep: Vec<String> = present.iter().map(|&m| matrix.models[m].clone()).collect();
        ScoreMatrix::build(rows, corpus, &keep)?
    };
    let tests = options.bonferroni_tests;
    let mut warnings = Vec::new();

    for (m, name) in matrix.models.iter().enumerate() {
        let undefined = matrix.undefined_papers(m);
        if !undefined.is_empty() {
            warnings.push(format!(
                "{name}: score undefined for {} paper(s): {}",
                undefined.len(),
                undefined.join(", ")
            ));
        }
        let (mut err, mut total) = (0usize, 0usize);
        for p in 0..matrix.papers.len() {
            if let Some(r) = matrix.row(p, m) {
                err += r.n_error_excluded;
                total += r.n_error_excluded + r.n_probes_scored;
            }
        }
        if total > 0 && err as f64 / total as f64 > ERROR_RATE_WARN_THRESHOLD {
            warnings.push(format!(
                "{name}: ERROR rate {:.2}% exceeds {:.1}%",
                100.0 * err as f64 / total as f64,
                100.0 * ERROR_RATE_WARN_THRESHOLD
            ));
        }
    }

    let results = model_results(&matrix, specs).map(|mut rs| {
        for r in &mut rs {
            r.correlation = r.correlation.map(|c| with_tests(c, tests));
        }
        rs
    });
    if let Ok(rs) = &results {
        for r in rs.iter().filter(|r| r.correlation.is_none()) {
            warnings.push(format!(
                "{}: correlation undefined ({})",
                r.spec.model_name,
                r.undefined_reason.as_deref().unwrap_or("unknown")
            ));
        }
    }

    let ensemble = overall_correlation(&matrix).map(|mut o| {
        o.ensemble_median = with_tests(o.ensemble_median, tests);
        o.pooled = with_tests(o.pooled, tests);
        o.pearson_log = with_tests(o.pearson_log, tests);
        o
    });

    let sign_test = match &results {
        Ok(rs) => {
            let coefs: Vec<f64> = rs.iter().filter_map(|r| r.correlation.map(|c| c.coefficient)).collect();
            if coefs.is_empty() {
                Err("no model has a defined correlation".to_string())
            } else {
                Ok(sign_consistency(&coefs, options.sidedness, options.zero_policy))
            }
        }
        Err(e) => Err(e.to_string()),
    };

    let ens_obs = ensemble_observations(&matrix);
    let high_low = {
        let rates: Vec<f64> = ens_obs.iter().map(|o| o.correct_rate).collect();
        let cits: Vec<u64> = ens_obs.iter().map(|o| o.citations).collect();
        high_low_contrast(&rates, &cits)
    };

    let bins = if ens_obs.is_empty() {
        Err("no paper has a defined ensemble score".to_string())
    } else {
        let mut out = vec![bin_analysis("ensemble", &ens_obs, &options.bins)];
        let top = results.as_ref().ok().and_then(|rs| {
            rs.iter()
                .filter_map(|r| r.correlation.map(|c| (r, c.coefficient)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.spec.model_name.cmp(&a.0.spec.model_name)))
        });
        if let Some((r, _)) = top {
            let m = matrix.model_index(&r.spec.model_name).expect("ranked model is in the matrix");
            out.push(bin_analysis(&r.spec.model_name, &model_observations(&matrix, m), &options.bins));
        }
        for b in out[0].bins.iter().filter(|b| b.n_papers == 0) {
            warnings.push(format!("citation bin {} is empty", b.bin.label));
        }
        Ok(out)
    };

    let temporal = temporal_compare(&matrix).map(|mut t| {
        for c in t.ensemble.values_mut() {
            *c = with_tests(*c, tests);
        }
        t
    });
    match &temporal {
        Ok(t) => {
            for (y, n) in &t.n_papers {
                if *n < LOW_COHORT_WARN {
                    warnings.push(format!("cohort {y} has only {n} papers"));
                }
            }
            let invalid: Vec<&str> = t.per_model.iter().filter(|m| !m.valid).map(|m| m.model_name.as_str()).collect();
            if !invalid.is_empty() {
                warnings.push(format!(
                    "{} model(s) lack a defined score in some cohort: {}",
                    invalid.len(),
                    invalid.join(", ")
                ));
            }
        }
        Err(e) => warnings.push(format!("temporal comparison skipped: {e}")),
    }

    let probe_type = probe_type_power(&matrix);
    warnings.extend(probe_type.notices.iter().cloned());

    let size_groups = match &results {
        Ok(rs) => {
            let pairs: Vec<(ModelSpec, f64)> = rs
                .iter()
                .filter_map(|r| r.correlation.map(|c| (r.spec.clone(), c.coefficient)))
                .collect();
            size_group_analysis(&pairs, &options.size_groups).map_err(|e| e.to_string())
        }
        Err(e) => Err(e.to_string()),
    };

    let pairwise = pairwise_model_agreement(&matrix, specs);
    let vendors = results
        .as_ref()
        .map(|rs| vendor_summary(rs))
        .map_err(|e| e.to_string());

    let snapshot = corpus.first().map(|p| p.citation_snapshot_date.to_string());
    let run_metadata = RunMetadata {
        config_digest: options.config_digest.clone(),
        corpus_hash: options.corpus_hash.clone(),
        score_table_hash: options.score_table_hash.clone(),
        citation_snapshot_date: snapshot,
        analyzed_at: options.analyzed_at.clone(),
        n_papers: matrix.papers.len(),
        n_models: matrix.models.len(),
        bins: options.bins.tiers().iter().map(|t| t.label.clone()).collect(),
        sidedness: options.sidedness,
        zero_policy: options.zero_policy,
        bonferroni_tests: tests,
        cohort_validity_rule: format!(
            "a model is valid for the cohort comparison when its score is defined for at least {MIN_COHORT_PAPERS} papers and not constant in every cohort"
        ),
    };

    let probe_type = if probe_type.types.is_empty() {
        Section::Skipped {
            reason: "no probe type has scored papers".into(),
        }
    } else {
        Section::Present { value: probe_type }
    };

    Ok(AnalysisReport {
        run_metadata,
        model_ranking: Section::from_result(results),
        ensemble: Section::from_result(ensemble),
        sign_test: Section::from_result(sign_test),
        high_low: Section::from_result(high_low),
        bins: Section::from_result(bins),
        temporal: Section::from_result(temporal),
        probe_type,
        size_groups: Section::from_result(size_groups),
        pairwise: Section::from_result(pairwise),
        vendors: Section::from_result(vendors),
        warnings,
    })
}
