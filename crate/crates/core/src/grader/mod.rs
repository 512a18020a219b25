//! Response grading and memory-score aggregation.
//!
//! Each response is classified as CORRECT, PARTIAL, REFUSAL, WRONG,
//! HALLUCINATION or ERROR. The first four scoring grades map to 1, 0.5, 0
//! and 0, hallucinations to 0, and ERROR is dropped. A paper's memory score
//! for one model is the mean over its remaining probes.

mod rules;
mod table;

pub use rules::{CompiledRules, HallucinationHeuristic, NamedPattern, Normalization, ParseRules};
pub use table::{read_score_table, score_table_string, write_score_table, ScoreRow};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modelclient::{read_response_log, LogHeader, ModelError, RawResponse};
use crate::probegen::{Probe, ProbeSuite, ProbeType};

/// Warn when more than this fraction of responses are ERROR.
pub const ERROR_RATE_WARN_THRESHOLD: f64 = 0.005;

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("invalid parse rules: {0}")]
    Rules(String),
    #[error("graded response references unknown probe {0}")]
    UnknownProbe(String),
    #[error("probe {0} graded more than once")]
    DuplicateProbe(String),
    #[error("graded responses mix models {0} and {1}")]
    MixedModels(String, String),
    #[error("response log does not match the probe suite: {0}")]
    SuiteMismatch(String),
    #[error("no graded responses")]
    Empty,
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Log(#[from] ModelError),
    #[error("score table {path}: {message}")]
    Table { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Grade {
    Correct,
    Partial,
    Refusal,
    Wrong,
    Hallucination,
    Error,
}

impl Grade {
    pub const ALL: [Grade; 6] = [
        Grade::Correct,
        Grade::Partial,
        Grade::Refusal,
        Grade::Wrong,
        Grade::Hallucination,
        Grade::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Correct => "CORRECT",
            Grade::Partial => "PARTIAL",
            Grade::Refusal => "REFUSAL",
            Grade::Wrong => "WRONG",
            Grade::Hallucination => "HALLUCINATION",
            Grade::Error => "ERROR",
        }
    }

    /// Five-grade points; `None` for ERROR.
    pub fn five_grade_score(self) -> Option<i8> {
        match self {
            Grade::Correct => Some(2),
            Grade::Partial => Some(1),
            Grade::Refusal => Some(0),
            Grade::Wrong => Some(-1),
            Grade::Hallucination => Some(-2),
            Grade::Error => None,
        }
    }
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary score of a grade; `None` means excluded.
pub fn map_to_binary(grade: Grade) -> Option<f64> {
    match grade {
        Grade::Correct => Some(1.0),
        Grade::Partial => Some(0.5),
        Grade::Refusal | Grade::Wrong | Grade::Hallucination => Some(0.0),
        Grade::Error => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub grade: Grade,
    pub matched_rule: String,
}

fn parsed(grade: Grade, rule: impl Into<String>) -> Parsed {
    Parsed {
        grade,
        matched_rule: rule.into(),
    }
}

/// Single upper-case letters in a captured list such as `C or D`.
fn letters_in(list: &str) -> Vec<char> {
    list.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| t.len() == 1)
        .filter_map(|t| t.chars().next())
        .filter(char::is_ascii_uppercase)
        .collect()
}

fn letter_index(letter: char) -> usize {
    (letter as u8 - b'A') as usize
}

fn grade_letter(letter: char, probe: &Probe, rule: &str) -> Parsed {
    let i = letter_index(letter);
    if i >= probe.options.len() {
        parsed(Grade::Hallucination, format!("{rule}:out_of_range"))
    } else if i == probe.correct_index {
        parsed(Grade::Correct, rule)
    } else {
        parsed(Grade::Wrong, rule)
    }
}

fn matches_some_option(span: &str, options: &[String]) -> bool {
    !span.is_empty() && options.iter().any(|o| o.contains(span) || span.contains(o.as_str()))
}

fn degenerate(norm: &str) -> bool {
    let mut run = 1;
    let tokens: Vec<&str> = norm.split_whitespace().collect();
    for w in tokens.windows(2) {
        if w[0] == w[1] {
            run += 1;
            if run >= 6 {
                return true;
            }
        } else {
            run = 1;
        }
    }
    false
}

/// Classifies one model output. Rules apply in a fixed order and the first
/// that fires decides: option binding, refusal, partial elimination,
/// hallucination heuristics, then ERROR.
pub fn parse_response(text: &str, probe: &Probe, rules: &CompiledRules) -> Parsed {
    if text.trim().is_empty() {
        return parsed(Grade::Error, "empty");
    }
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");

    // An explicit final-answer marker overrides everything else.
    let mut last_final: Option<(usize, char, &str)> = None;
    for c in &rules.final_answer {
        for m in c.re.captures_iter(&collapsed) {
            let g = m.get(1).expect("group checked at compile time");
            if let Some(l) = g.as_str().chars().next() {
                if last_final.is_none_or(|(pos, _, _)| g.start() >= pos) {
                    last_final = Some((g.start(), l, &c.id));
                }
            }
        }
    }
    if let Some((_, l, id)) = last_final {
        return grade_letter(l, probe, id);
    }

    // Letters inside elimination clauses are not commitments.
    let mut stripped = collapsed.clone();
    for c in &rules.elimination {
        stripped = c.re.replace_all(&stripped, " ").into_owned();
    }
    let mut bound: BTreeSet<char> = BTreeSet::new();
    let mut first_rule: Option<&str> = None;
    for c in &rules.options {
        for m in c.re.captures_iter(&stripped) {
            if let Some(l) = m.get(1).and_then(|g| g.as_str().chars().next()) {
                bound.insert(l);
                first_rule.get_or_insert(&c.id);
            }
        }
    }
    match bound.len() {
        0 => {}
        1 => {
            let l = *bound.iter().next().expect("one letter");
            return grade_letter(l, probe, first_rule.expect("rule recorded"));
        }
        _ => return parsed(Grade::Hallucination, "multiple_letters"),
    }

    let norm = rules.normalize(text);
    let options: Vec<String> = probe.options.iter().map(|o| rules.normalize(o)).collect();
    let hits: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.is_empty() && norm.contains(o.as_str()))
        .map(|(i, _)| i)
        .collect();
    if hits.len() == 1 {
        let i = hits[0];
        let grade = if i == probe.correct_index { Grade::Correct } else { Grade::Wrong };
        return parsed(grade, "option_text");
    }

    for c in &rules.refusal {
        if c.re.is_match(&norm) {
            return parsed(Grade::Refusal, c.id.clone());
        }
    }

    let eliminated = rules.elimination.iter().any(|c| c.re.is_match(&collapsed));
    if eliminated {
        for c in &rules.hedge {
            for m in c.re.captures_iter(&collapsed) {
                let candidates = letters_in(m.get(1).map_or("", |g| g.as_str()));
                let distinct: BTreeSet<char> = candidates.into_iter().collect();
                if distinct.len() >= 2 {
                    let correct = (b'A' + probe.correct_index as u8) as char;
                    return if distinct.contains(&correct) {
                        parsed(Grade::Partial, format!("partial:{}", c.id))
                    } else {
                        parsed(Grade::Wrong, format!("partial_excludes_correct:{}", c.id))
                    };
                }
            }
        }
    }

    for h in &rules.rules.hallucination_heuristics {
        let fired = match h {
            HallucinationHeuristic::QuotedTextMatchesNoOption => rules.quoted.captures_iter(text).any(|m| {
                let span = rules.normalize(&m[1]);
                span.split_whitespace().count() >= 3 && !matches_some_option(&span, &options)
            }),
            HallucinationHeuristic::AssertedTextMatchesNoOption => {
                rules.asserted.captures(&collapsed).is_some_and(|m| {
                    let span = rules.normalize(m[1].trim_matches(|c: char| !c.is_alphanumeric()));
                    span.split_whitespace().count() >= 2 && !matches_some_option(&span, &options)
                })
            }
            HallucinationHeuristic::DegenerateRepetition => degenerate(&norm),
        };
        if fired {
            let id = serde_json::to_value(h).expect("heuristic serializes");
            return parsed(Grade::Hallucination, id.as_str().unwrap_or("hallucination").to_string());
        }
    }
    parsed(Grade::Error, "unparsed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedResponse {
    pub probe_id: String,
    pub model_name: String,
    pub grade: Grade,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub five_grade_score: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_score: Option<f64>,
    pub matched_rule: String,
}

pub fn grade_response(response: &RawResponse, probe: &Probe, rules: &CompiledRules) -> GradedResponse {
    let p = if response.transport_error.is_some() {
        parsed(Grade::Error, "transport_error")
    } else {
        parse_response(&response.text, probe, rules)
    };
    GradedResponse {
        probe_id: response.probe_id.clone(),
        model_name: response.model_name.clone(),
        grade: p.grade,
        five_grade_score: p.grade.five_grade_score(),
        binary_score: map_to_binary(p.grade),
        matched_rule: p.matched_rule,
    }
}

/// Memory score of one paper under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryScore {
    pub paper_id: String,
    pub model_name: String,
    /// `None` when every probe was ERROR.
    pub value: Option<f64>,
    pub n_probes_scored: usize,
    pub n_error_excluded: usize,
    pub per_type_values: BTreeMap<ProbeType, f64>,
    pub grade_counts: BTreeMap<Grade, usize>,
}

impl MemoryScore {
    /// Share of scored probes with `grade`; `None` when nothing was scored.
    pub fn grade_rate(&self, grade: Grade) -> Option<f64> {
        (self.n_probes_scored > 0)
            .then(|| *self.grade_counts.get(&grade).unwrap_or(&0) as f64 / self.n_probes_scored as f64)
    }
}

/// One score per paper with at least one graded response, in paper order.
pub fn aggregate_scores(graded: &[GradedResponse], suite: &ProbeSuite) -> Result<Vec<MemoryScore>, GradeError> {
    let by_id = suite.by_id();
    let mut model: Option<&str> = None;
    let mut seen = BTreeSet::new();
    #[derive(Default)]
    struct Acc {
        sum: f64,
        n: usize,
        errors: usize,
        per_type: BTreeMap<ProbeType, (f64, usize)>,
        counts: BTreeMap<Grade, usize>,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for g in graded {
        match model {
            None => model = Some(&g.model_name),
            Some(m) if m != g.model_name => {
                return Err(GradeError::MixedModels(m.to_string(), g.model_name.clone()))
            }
            _ => {}
        }
        let probe = by_id
            .get(g.probe_id.as_str())
            .ok_or_else(|| GradeError::UnknownProbe(g.probe_id.clone()))?;
        if !seen.insert(g.probe_id.as_str()) {
            return Err(GradeError::DuplicateProbe(g.probe_id.clone()));
        }
        let a = acc.entry(probe.paper_id.as_str()).or_default();
        match map_to_binary(g.grade) {
            Some(b) => {
                a.sum += b;
                a.n += 1;
                let t = a.per_type.entry(probe.probe_type).or_insert((0.0, 0));
                t.0 += b;
                t.1 += 1;
                *a.counts.entry(g.grade).or_insert(0) += 1;
            }
            None => a.errors += 1,
        }
    }
    let model = model.unwrap_or_default().to_string();
    Ok(acc
        .into_iter()
        .map(|(paper_id, a)| MemoryScore {
            paper_id: paper_id.to_string(),
            model_name: model.clone(),
            value: (a.n > 0).then(|| a.sum / a.n as f64),
            n_probes_scored: a.n,
            n_error_excluded: a.errors,
            per_type_values: a.per_type.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
            grade_counts: a.counts,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeDistribution {
    /// Rates over non-ERROR responses; sums to 1 when any exist.
    pub rates: BTreeMap<Grade, f64>,
    pub error_rate: f64,
    pub n_total: usize,
    pub n_error: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn grade_distribution(graded: &[GradedResponse]) -> Result<GradeDistribution, GradeError> {
    if graded.is_empty() {
        return Err(GradeError::Empty);
    }
    let mut counts: BTreeMap<Grade, usize> = BTreeMap::new();
    for g in graded {
        *counts.entry(g.grade).or_insert(0) += 1;
    }
    let n_error = *counts.get(&Grade::Error).unwrap_or(&0);
    let scored = graded.len() - n_error;
    let rates = Grade::ALL[..5]
        .iter()
        .map(|&g| {
            let r = if scored == 0 {
                0.0
            } else {
                *counts.get(&g).unwrap_or(&0) as f64 / scored as f64
            };
            (g, r)
        })
        .collect();
    let error_rate = n_error as f64 / graded.len() as f64;
    let warning = (error_rate > ERROR_RATE_WARN_THRESHOLD).then(|| {
        let model = &graded[0].model_name;
        let w = format!(
            "{model}: ERROR rate {:.2}% exceeds {:.1}% ({n_error} of {})",
            100.0 * error_rate,
            100.0 * ERROR_RATE_WARN_THRESHOLD,
            graded.len()
        );
        tracing::warn!("{w}");
        w
    });
    Ok(GradeDistribution {
        rates,
        error_rate,
        n_total: graded.len(),
        n_error,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedLogHeader {
    pub response_log: LogHeader,
    pub rules_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedRecord {
    #[serde(flatten)]
    pub response: RawResponse,
    pub grade: Grade,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub five_grade_score: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_score: Option<f64>,
    pub matched_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum GradedLine {
    Header(GradedLogHeader),
    Graded(GradedRecord),
}

/// Grades every response in a log against `suite`.
pub fn grade_responses(
    header: &LogHeader,
    responses: &[RawResponse],
    suite: &ProbeSuite,
    rules: &CompiledRules,
) -> Result<Vec<GradedRecord>, GradeError> {
    if header.corpus_hash != suite.corpus_hash {
        return Err(GradeError::SuiteMismatch(format!(
            "log corpus {} vs suite corpus {}",
            header.corpus_hash, suite.corpus_hash
        )));
    }
    let by_id = suite.by_id();
    responses
        .iter()
        .map(|r| {
            let probe = by_id
                .get(r.probe_id.as_str())
                .ok_or_else(|| GradeError::UnknownProbe(r.probe_id.clone()))?;
            let g = grade_response(r, probe, rules);
            Ok(GradedRecord {
                response: r.clone(),
                grade: g.grade,
                five_grade_score: g.five_grade_score,
                binary_score: g.binary_score,
                matched_rule: g.matched_rule,
            })
        })
        .collect()
}

impl GradedRecord {
    pub fn graded(&self) -> GradedResponse {
        GradedResponse {
            probe_id: self.response.probe_id.clone(),
            model_name: self.response.model_name.clone(),
            grade: self.grade,
            five_grade_score: self.five_grade_score,
            binary_score: self.binary_score,
            matched_rule: self.matched_rule.clone(),
        }
    }
}

pub fn graded_log_string(header: &GradedLogHeader, records: &[GradedRecord]) -> String {
    let mut out = serde_json::to_string(&GradedLine::Header(header.clone())).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(&GradedLine::Graded(r.clone())).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_graded_log(path: &Path) -> Result<(GradedLogHeader, Vec<GradedRecord>), GradeError> {
    let io = |e: String| GradeError::Io {
        path: path.display().to_string(),
        message: e,
    };
    let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match serde_json::from_str(line).map_err(|e| io(format!("line {}: {e}", i + 1)))? {
            GradedLine::Header(h) if i == 0 => header = Some(h),
            GradedLine::Graded(r) if i > 0 => records.push(r),
            _ => return Err(io(format!("line {}: unexpected record", i + 1))),
        }
    }
    Ok((header.ok_or_else(|| io("missing header".into()))?, records))
}

/// Output of grading one response log.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedRun {
    pub header: GradedLogHeader,
    pub records: Vec<GradedRecord>,
    pub scores: Vec<MemoryScore>,
    pub distribution: GradeDistribution,
}

pub fn grade_log(response_log: &Path, suite: &ProbeSuite, rules: &ParseRules) -> Result<GradedRun, GradeError> {
    let (header, responses) = read_response_log(response_log)?;
    if responses.len() != suite.probes.len() {
        return Err(GradeError::SuiteMismatch(format!(
            "{} responses for {} probes",
            responses.len(),
            suite.probes.len()
        )));
    }
    let compiled = CompiledRules::new(rules.clone())?;
    let records = grade_responses(&header, &responses, suite, &compiled)?;
    let graded: Vec<GradedResponse> = records.iter().map(GradedRecord::graded).collect();
    let scores = aggregate_scores(&graded, suite)?;
    let distribution = grade_distribution(&graded)?;
    Ok(GradedRun {
        header: GradedLogHeader {
            response_log: header,
            rules_digest: rules.digest(),
        },
        records,
        scores,
        distribution,
    })
}
