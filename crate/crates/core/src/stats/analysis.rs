//! Analyses over a paper-by-model score matrix.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::corr::{average_ranks, pearson_coefficient, spearman, CorrelationResult};
use super::hypothesis::{high_low_contrast, HighLowResult};
use super::StatsError;
use crate::corpus::{CitationTier, PaperRecord, TierSet};
use crate::grader::{Grade, ScoreRow};
use crate::modelclient::ModelSpec;
use crate::probegen::ProbeType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperInfo {
    pub paper_id: String,
    pub citations: u64,
    pub year: i32,
}

/// Score-table rows arranged as papers × models, joined with citations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub papers: Vec<PaperInfo>,
    pub models: Vec<String>,
    cells: Vec<Vec<Option<ScoreRow>>>,
}

impl ScoreMatrix {
    /// Models appear in `model_order` first, then any others by name.
    /// Every scored paper must be in `corpus`.
    pub fn build(rows: &[ScoreRow], corpus: &[PaperRecord], model_order: &[String]) -> Result<Self, StatsError> {
        let info: BTreeMap<&str, &PaperRecord> = corpus.iter().map(|p| (p.paper_id.as_str(), p)).collect();
        let mut models: Vec<String> = model_order.to_vec();
        let extra: BTreeSet<&str> = rows
            .iter()
            .map(|r| r.model_name.as_str())
            .filter(|m| !model_order.iter().any(|o| o == m))
            .collect();
        models.extend(extra.into_iter().map(String::from));
        let scored: BTreeSet<&str> = rows.iter().map(|r| r.paper_id.as_str()).collect();
        let mut papers = Vec::new();
        for id in &scored {
            let p = info.get(id).ok_or_else(|| StatsError::UnknownPaper(id.to_string()))?;
            papers.push(PaperInfo {
                paper_id: id.to_string(),
                citations: p.citation_count,
                year: p.year,
            });
        }
        let pidx: BTreeMap<&str, usize> = papers.iter().enumerate().map(|(i, p)| (p.paper_id.as_str(), i)).collect();
        let midx: BTreeMap<&str, usize> = models.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        let mut cells = vec![vec![None; models.len()]; papers.len()];
        for r in rows {
            let cell = &mut cells[pidx[r.paper_id.as_str()]][midx[r.model_name.as_str()]];
            if cell.is_some() {
                return Err(StatsError::DuplicateRow(r.paper_id.clone(), r.model_name.clone()));
            }
            *cell = Some(r.clone());
        }
        Ok(Self { papers, models, cells })
    }

    pub fn row(&self, paper: usize, model: usize) -> Option<&ScoreRow> {
        self.cells[paper][model].as_ref()
    }

    pub fn value(&self, paper: usize, model: usize) -> Option<f64> {
        self.row(paper, model).and_then(|r| r.value)
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.models.iter().position(|m| m == name)
    }

    /// Papers whose score is undefined for `model`.
    pub fn undefined_papers(&self, model: usize) -> Vec<&str> {
        (0..self.papers.len())
            .filter(|&p| self.row(p, model).is_some() && self.value(p, model).is_none())
            .map(|p| self.papers[p].paper_id.as_str())
            .collect()
    }

    /// Keeps only papers whose index satisfies `keep`.
    pub fn filter_papers(&self, keep: impl Fn(&PaperInfo) -> bool) -> Self {
        let (papers, cells) = self
            .papers
            .iter()
            .zip(&self.cells)
            .filter(|(p, _)| keep(p))
            .map(|(p, c)| (p.clone(), c.clone()))
            .unzip();
        Self {
            papers,
            models: self.models.clone(),
            cells,
        }
    }
}

/// Median of a nonempty slice; mean of the middle two for even length.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScores {
    /// Per paper, in matrix order; `None` when no model scored the paper.
    pub values: Vec<Option<f64>>,
    pub excluded: Vec<String>,
}

/// Per-paper median of `field` over the models where it is defined.
pub fn ensemble_median_by(matrix: &ScoreMatrix, field: impl Fn(&ScoreRow) -> Option<f64>) -> EnsembleScores {
    let mut excluded = Vec::new();
    let values = (0..matrix.papers.len())
        .map(|p| {
            let vals: Vec<f64> = (0..matrix.models.len())
                .filter_map(|m| matrix.row(p, m).and_then(&field))
                .collect();
            let med = median(&vals);
            if med.is_none() {
                excluded.push(matrix.papers[p].paper_id.clone());
            }
            med
        })
        .collect();
    EnsembleScores { values, excluded }
}

pub fn ensemble_median(matrix: &ScoreMatrix) -> EnsembleScores {
    ensemble_median_by(matrix, |r| r.value)
}

/// Defined `(citations, value)` pairs.
fn defined_pairs(matrix: &ScoreMatrix, values: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    matrix
        .papers
        .iter()
        .zip(values)
        .filter_map(|(p, v)| v.map(|v| (p.citations as f64, v)))
        .unzip()
}

pub fn correlate_with_citations(matrix: &ScoreMatrix, values: &[Option<f64>]) -> Result<CorrelationResult, StatsError> {
    let (c, v) = defined_pairs(matrix, values);
    spearman(&c, &v)
}

fn column(matrix: &ScoreMatrix, model: usize, field: impl Fn(&ScoreRow) -> Option<f64>) -> Vec<Option<f64>> {
    (0..matrix.papers.len())
        .map(|p| matrix.row(p, model).and_then(&field))
        .collect()
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub spec: ModelSpec,
    pub correlation: Option<CorrelationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
    pub n_papers_defined: usize,
    pub n_papers_undefined: usize,
    pub mean_score: Option<f64>,
    pub correct_rate: Option<f64>,
    pub refusal_rate: Option<f64>,
}

/// Spearman of each model's scores against citations.
pub fn model_results(matrix: &ScoreMatrix, specs: &[ModelSpec]) -> Result<Vec<ModelResult>, StatsError> {
    matrix
        .models
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let spec = specs
                .iter()
                .find(|s| &s.model_name == name)
                .ok_or_else(|| StatsError::UnknownModel(name.clone()))?
                .clone();
            let values = column(matrix, m, |r| r.value);
            let (correlation, undefined_reason) = match correlate_with_citations(matrix, &values) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(ModelResult {
                spec,
                correlation,
                undefined_reason,
                n_papers_defined: values.iter().flatten().count(),
                n_papers_undefined: matrix.undefined_papers(m).len(),
                mean_score: mean(values.iter().flatten().copied()),
                correct_rate: mean(column(matrix, m, |r| r.correct_rate).into_iter().flatten()),
                refusal_rate: mean(column(matrix, m, |r| r.refusal_rate).into_iter().flatten()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallResult {
    /// Spearman of the per-paper ensemble median against citations.
    pub ensemble_median: CorrelationResult,
    /// Spearman over every defined (paper, model) pair. Pairs are not
    /// independent, so its p-value is optimistic.
    pub pooled: CorrelationResult,
    /// Pearson of the ensemble median against `ln(1 + citations)`.
    pub pearson_log: CorrelationResult,
    pub n_papers_excluded: usize,
}

pub fn overall_correlation(matrix: &ScoreMatrix) -> Result<OverallResult, StatsError> {
    let ens = ensemble_median(matrix);
    let ensemble_median = correlate_with_citations(matrix, &ens.values)?;
    let (mut c, mut v) = (Vec::new(), Vec::new());
    for (p, info) in matrix.papers.iter().enumerate() {
        for m in 0..matrix.models.len() {
            if let Some(s) = matrix.value(p, m) {
                c.push(info.citations as f64);
                v.push(s);
            }
        }
    }
    let pooled = spearman(&c, &v)?;
    let (cits, vals): (Vec<u64>, Vec<f64>) = matrix
        .papers
        .iter()
        .zip(&ens.values)
        .filter_map(|(p, v)| v.map(|v| (p.citations, v)))
        .unzip();
    let pearson_log = super::corr::pearson_log_citations(&cits, &vals)?;
    Ok(OverallResult {
        ensemble_median,
        pooled,
        pearson_log,
        n_papers_excluded: ens.excluded.len(),
    })
}

/// Per-paper inputs to the bin analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaperObs {
    pub citations: u64,
    pub score: f64,
    pub correct_rate: f64,
    pub wrong_rate: f64,
    pub refusal_rate: f64,
}

/// Defined per-paper observations for one model.
pub fn model_observations(matrix: &ScoreMatrix, model: usize) -> Vec<PaperObs> {
    (0..matrix.papers.len())
        .filter_map(|p| {
            let r = matrix.row(p, model)?;
            Some(PaperObs {
                citations: matrix.papers[p].citations,
                score: r.value?,
                correct_rate: r.rate(Grade::Correct)?,
                wrong_rate: r.rate(Grade::Wrong)?,
                refusal_rate: r.rate(Grade::Refusal)?,
            })
        })
        .collect()
}

/// Ensemble-median per-paper observations.
pub fn ensemble_observations(matrix: &ScoreMatrix) -> Vec<PaperObs> {
    let s = ensemble_median(matrix).values;
    let c = ensemble_median_by(matrix, |r| r.correct_rate).values;
    let w = ensemble_median_by(matrix, |r| r.wrong_rate).values;
    let f = ensemble_median_by(matrix, |r| r.refusal_rate).values;
    (0..matrix.papers.len())
        .filter_map(|p| {
            Some(PaperObs {
                citations: matrix.papers[p].citations,
                score: s[p]?,
                correct_rate: c[p]?,
                wrong_rate: w[p]?,
                refusal_rate: f[p]?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: CitationTier,
    pub n_papers: usize,
    pub mean_memory_score: Option<f64>,
    pub correct_rate: Option<f64>,
    pub wrong_rate: Option<f64>,
    pub refusal_rate: Option<f64>,
    /// `1.96 * sd / sqrt(n)`; needs two papers.
    pub ci95_halfwidth: Option<f64>,
}

pub fn citation_bin_analysis(obs: &[PaperObs], bins: &TierSet) -> Vec<BinSummary> {
    bins.tiers()
        .iter()
        .map(|tier| {
            let inside: Vec<&PaperObs> = obs.iter().filter(|o| tier.contains(o.citations)).collect();
            let n = inside.len();
            let m = mean(inside.iter().map(|o| o.score));
            let ci = m.filter(|_| n >= 2).map(|m| {
                let var = inside.iter().map(|o| (o.score - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                1.96 * var.sqrt() / (n as f64).sqrt()
            });
            BinSummary {
                bin: tier.clone(),
                n_papers: n,
                mean_memory_score: m,
                correct_rate: mean(inside.iter().map(|o| o.correct_rate)),
                wrong_rate: mean(inside.iter().map(|o| o.wrong_rate)),
                refusal_rate: mean(inside.iter().map(|o| o.refusal_rate)),
                ci95_halfwidth: ci,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAnalysis {
    pub source: String,
    pub bins: Vec<BinSummary>,
    /// Spearman of bin index against bin mean over nonempty bins.
    pub trend: Option<CorrelationResult>,
    /// Last nonempty bin mean minus first, in percentage points.
    pub rise_pp: Option<f64>,
    /// Paper-level Spearman of citations against each rate.
    pub component_correlations: BTreeMap<Grade, CorrelationResult>,
}

pub fn bin_analysis(source: &str, obs: &[PaperObs], bins: &TierSet) -> BinAnalysis {
    let summaries = citation_bin_analysis(obs, bins);
    let nonempty: Vec<(f64, f64)> = summaries
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.mean_memory_score.map(|m| (i as f64, m)))
        .collect();
    let (idx, means): (Vec<f64>, Vec<f64>) = nonempty.iter().copied().unzip();
    let trend = spearman(&idx, &means).ok();
    let rise_pp = (means.len() >= 2).then(|| (means[means.len() - 1] - means[0]) * 100.0);
    let cits: Vec<f64> = obs.iter().map(|o| o.citations as f64).collect();
    let mut component_correlations = BTreeMap::new();
    for (g, f) in [
        (Grade::Correct, (|o: &PaperObs| o.correct_rate) as fn(&PaperObs) -> f64),
        (Grade::Wrong, |o: &PaperObs| o.wrong_rate),
        (Grade::Refusal, |o: &PaperObs| o.refusal_rate),
    ] {
        let v: Vec<f64> = obs.iter().map(f).collect();
        if let Ok(c) = spearman(&cits, &v) {
            component_correlations.insert(g, c);
        }
    }
    BinAnalysis {
        source: source.to_string(),
        bins: summaries,
        trend,
        rise_pp,
        component_correlations,
    }
}

/// Papers a model needs in a cohort for its cohort correlation to count.
pub const MIN_COHORT_PAPERS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCell {
    pub n_defined: usize,
    pub correlation: Option<CorrelationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCohorts {
    pub model_name: String,
    pub by_year: BTreeMap<i32, CohortCell>,
    /// Defined correlation in every cohort.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalResult {
    pub years: Vec<i32>,
    pub n_papers: BTreeMap<i32, usize>,
    pub ensemble: BTreeMap<i32, CorrelationResult>,
    pub per_model: Vec<ModelCohorts>,
    pub n_valid_models: usize,
    /// Valid models whose latest-cohort rho exceeds their earliest.
    pub n_later_higher: usize,
    pub validity_rule: String,
}

pub fn temporal_compare(matrix: &ScoreMatrix) -> Result<TemporalResult, StatsError> {
    let years: Vec<i32> = matrix.papers.iter().map(|p| p.year).collect::<BTreeSet<_>>().into_iter().collect();
    if years.len() < 2 {
        return Err(StatsError::Empty("fewer than two publication years".into()));
    }
    let mut ensemble = BTreeMap::new();
    let mut n_papers = BTreeMap::new();
    let cohorts: BTreeMap<i32, ScoreMatrix> =
        years.iter().map(|&y| (y, matrix.filter_papers(|p| p.year == y))).collect();
    for (&y, sub) in &cohorts {
        n_papers.insert(y, sub.papers.len());
        if sub.papers.len() < MIN_COHORT_PAPERS {
            return Err(StatsError::TooFew {
                needed: MIN_COHORT_PAPERS,
                got: sub.papers.len(),
            });
        }
        ensemble.insert(y, correlate_with_citations(sub, &ensemble_median(sub).values)?);
    }
    let per_model: Vec<ModelCohorts> = matrix
        .models
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let by_year: BTreeMap<i32, CohortCell> = cohorts
                .iter()
                .map(|(&y, sub)| {
                    let vals = column(sub, m, |r| r.value);
                    let n_defined = vals.iter().flatten().count();
                    let correlation = (n_defined >= MIN_COHORT_PAPERS)
                        .then(|| correlate_with_citations(sub, &vals).ok())
                        .flatten();
                    (y, CohortCell { n_defined, correlation })
                })
                .collect();
            let valid = by_year.values().all(|c| c.correlation.is_some());
            ModelCohorts {
                model_name: name.clone(),
                by_year,
                valid,
            }
        })
        .collect();
    let (first, last) = (years[0], years[years.len() - 1]);
    let rho = |mc: &ModelCohorts, y: i32| mc.by_year[&y].correlation.map(|c| c.coefficient);
    let valid: Vec<&ModelCohorts> = per_model.iter().filter(|m| m.valid).collect();
    let n_later_higher = valid.iter().filter(|m| rho(m, last) > rho(m, first)).count();
    Ok(TemporalResult {
        years,
        n_papers,
        ensemble,
        n_valid_models: valid.len(),
        n_later_higher,
        per_model,
        validity_rule: format!(
            "a model is valid when its scores are defined for at least {MIN_COHORT_PAPERS} papers and not constant in every cohort"
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTypePower {
    pub probe_type: ProbeType,
    pub n_papers: usize,
    pub correlation: Option<CorrelationResult>,
    pub high_low: Option<HighLowResult>,
    /// 1-based rank by |rho|.
    pub rank_by_rho: Option<usize>,
    /// 1-based rank by high-low difference.
    pub rank_by_diff: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTypeAnalysis {
    pub types: Vec<ProbeTypePower>,
    pub notices: Vec<String>,
}

fn rank_desc(keys: &[Option<f64>]) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..keys.len()).filter(|&i| keys[i].is_some()).collect();
    order.sort_by(|&a, &b| keys[b].unwrap().total_cmp(&keys[a].unwrap()).then(a.cmp(&b)));
    let mut ranks = vec![None; keys.len()];
    for (r, i) in order.into_iter().enumerate() {
        ranks[i] = Some(r + 1);
    }
    ranks
}

/// Discriminative power of each probe type, from ensemble-median per-type
/// scores. The high-low contrast uses those per-type scores.
pub fn probe_type_power(matrix: &ScoreMatrix) -> ProbeTypeAnalysis {
    let mut types = Vec::new();
    let mut notices = Vec::new();
    for t in ProbeType::ALL {
        let ens = ensemble_median_by(matrix, |r| r.type_value(t));
        let (cits, vals): (Vec<u64>, Vec<f64>) = matrix
            .papers
            .iter()
            .zip(&ens.values)
            .filter_map(|(p, v)| v.map(|v| (p.citations, v)))
            .unzip();
        if vals.is_empty() {
            notices.push(format!("{t}: no scored probes of this type"));
            continue;
        }
        let cf: Vec<f64> = cits.iter().map(|&c| c as f64).collect();
        let correlation = spearman(&cf, &vals)
            .map_err(|e| notices.push(format!("{t}: correlation undefined ({e})")))
            .ok();
        let high_low = high_low_contrast(&vals, &cits)
            .map_err(|e| notices.push(format!("{t}: high-low contrast undefined ({e})")))
            .ok();
        types.push(ProbeTypePower {
            probe_type: t,
            n_papers: vals.len(),
            correlation,
            high_low,
            rank_by_rho: None,
            rank_by_diff: None,
        });
    }
    let by_rho = rank_desc(&types.iter().map(|t| t.correlation.map(|c| c.coefficient.abs())).collect::<Vec<_>>());
    let by_diff = rank_desc(&types.iter().map(|t| t.high_low.map(|h| h.diff_pp)).collect::<Vec<_>>());
    for (i, t) in types.iter_mut().enumerate() {
        t.rank_by_rho = by_rho[i];
        t.rank_by_diff = by_diff[i];
    }
    ProbeTypeAnalysis { types, notices }
}

/// Half-open parameter-count range `[lower, upper)` in billions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeGroup {
    pub label: String,
    pub lower: f64,
    pub upper: Option<f64>,
}

impl SizeGroup {
    pub fn new(label: &str, lower: f64, upper: Option<f64>) -> Self {
        Self {
            label: label.to_string(),
            lower,
            upper,
        }
    }

    pub fn contains(&self, params: f64) -> bool {
        params >= self.lower && self.upper.is_none_or(|u| params < u)
    }

    /// 0-4B, 4-10B, 10-30B, 30B and up.
    pub fn default_groups() -> Vec<SizeGroup> {
        vec![
            SizeGroup::new("0-4B", 0.0, Some(4.0)),
            SizeGroup::new("4-10B", 4.0, Some(10.0)),
            SizeGroup::new("10-30B", 10.0, Some(30.0)),
            SizeGroup::new("30-100B", 30.0, None),
        ]
    }
}

pub fn validate_groups(groups: &[SizeGroup]) -> Result<(), StatsError> {
    let bad = |m: &str| Err(StatsError::BadGroups(m.to_string()));
    match groups.first() {
        None => return bad("no groups"),
        Some(g) if g.lower != 0.0 => return bad("first group must start at 0"),
        _ => {}
    }
    for w in groups.windows(2) {
        match w[0].upper {
            Some(u) if u == w[1].lower && u > w[0].lower => {}
            _ => return bad(&format!("groups {} and {} are not contiguous", w[0].label, w[1].label)),
        }
    }
    if groups.last().is_some_and(|g| g.upper.is_some()) {
        return bad("last group must be unbounded");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeGroupSummary {
    pub group: SizeGroup,
    pub n_models: usize,
    pub mean_rho: Option<f64>,
    pub models: Vec<String>,
}

pub fn size_group_analysis(models: &[(ModelSpec, f64)], groups: &[SizeGroup]) -> Result<Vec<SizeGroupSummary>, StatsError> {
    validate_groups(groups)?;
    Ok(groups
        .iter()
        .map(|g| {
            let members: Vec<&(ModelSpec, f64)> = models.iter().filter(|(s, _)| g.contains(s.params_billions)).collect();
            SizeGroupSummary {
                group: g.clone(),
                n_models: members.len(),
                mean_rho: mean(members.iter().map(|(_, r)| *r)),
                models: members.iter().map(|(s, _)| s.model_name.clone()).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub model_names: Vec<String>,
    /// Symmetric, unit diagonal; `None` where fewer than three papers are
    /// jointly defined or either column is constant.
    pub coefficients: Vec<Vec<Option<f64>>>,
    pub within_vendor_mean: Option<f64>,
    pub cross_vendor_mean: Option<f64>,
    pub overall_mean: Option<f64>,
    pub per_vendor_mean: BTreeMap<String, f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn pairwise_model_agreement(matrix: &ScoreMatrix, specs: &[ModelSpec]) -> Result<PairwiseMatrix, StatsError> {
    let k = matrix.models.len();
    if k < 2 {
        return Err(StatsError::TooFew { needed: 2, got: k });
    }
    let vendor: Vec<String> = matrix
        .models
        .iter()
        .map(|m| {
            specs
                .iter()
                .find(|s| &s.model_name == m)
                .map(|s| s.vendor.clone())
                .ok_or_else(|| StatsError::UnknownModel(m.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut coef = vec![vec![None; k]; k];
    let (mut within, mut cross, mut all) = (Vec::new(), Vec::new(), Vec::new());
    let mut per_vendor: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for a in 0..k {
        coef[a][a] = Some(1.0);
        for b in a + 1..k {
            let (xa, xb): (Vec<f64>, Vec<f64>) = (0..matrix.papers.len())
                .filter_map(|p| Some((matrix.value(p, a)?, matrix.value(p, b)?)))
                .unzip();
            let r = (xa.len() >= 3)
                .then(|| pearson_coefficient(&average_ranks(&xa), &average_ranks(&xb)).ok())
                .flatten();
            coef[a][b] = r;
            coef[b][a] = r;
            if let Some(r) = r {
                all.push(r);
                if vendor[a] == vendor[b] {
                    within.push(r);
                    per_vendor.entry(vendor[a].clone()).or_default().push(r);
                } else {
                    cross.push(r);
                }
            }
        }
    }
    Ok(PairwiseMatrix {
        model_names: matrix.models.clone(),
        coefficients: coef,
        within_vendor_mean: mean(within),
        cross_vendor_mean: mean(cross),
        overall_mean: mean(all.iter().copied()),
        per_vendor_mean: per_vendor
            .into_iter()
            .filter_map(|(v, rs)| mean(rs).map(|m| (v, m)))
            .collect(),
        min: all.iter().copied().reduce(f64::min),
        max: all.iter().copied().reduce(f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VendorSummary {
    pub vendor: String,
    pub n_models: usize,
    pub mean_rho: Option<f64>,
    pub best_rho: Option<f64>,
    pub best_model: Option<String>,
    pub n_significant: usize,
}

pub fn vendor_summary(results: &[ModelResult]) -> Vec<VendorSummary> {
    let mut by_vendor: BTreeMap<&str, Vec<&ModelResult>> = BTreeMap::new();
    for r in results {
        by_vendor.entry(r.spec.vendor.as_str()).or_default().push(r);
    }
    by_vendor
        .into_iter()
        .map(|(vendor, rs)| {
            let defined: Vec<(&str, CorrelationResult)> = rs
                .iter()
                .filter_map(|r| r.correlation.map(|c| (r.spec.model_name.as_str(), c)))
                .collect();
            let best = defined
                .iter()
                .max_by(|a, b| a.1.coefficient.total_cmp(&b.1.coefficient).then(b.0.cmp(a.0)));
            VendorSummary {
                vendor: vendor.to_string(),
                n_models: rs.len(),
                mean_rho: mean(defined.iter().map(|(_, c)| c.coefficient)),
                best_rho: best.map(|b| b.1.coefficient),
                best_model: best.map(|b| b.0.to_string()),
                n_significant: defined.iter().filter(|(_, c)| c.significance.p05).count(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[0.2, 0.9, 0.4]), Some(0.4));
        assert!((median(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn group_validation() {
        validate_groups(&SizeGroup::default_groups()).unwrap();
        assert!(validate_groups(&[SizeGroup::new("a", 0.0, Some(4.0))]).is_err());
        assert!(validate_groups(&[SizeGroup::new("a", 0.0, Some(4.0)), SizeGroup::new("b", 5.0, None)]).is_err());
        let g = SizeGroup::default_groups();
        assert!(g[1].contains(4.0));
        assert!(!g[0].contains(4.0));
    }

    #[test]
    fn rank_desc_ignores_missing() {
        assert_eq!(rank_desc(&[Some(0.1), None, Some(0.3)]), vec![Some(2), None, Some(1)]);
    }
}
