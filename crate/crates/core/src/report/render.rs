use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{io_err, AnalysisReport, ReportError, Section};
use crate::grader::Grade;
use crate::stats::{CorrelationMethod, CorrelationResult, ModelResult, Sidedness};

pub const ANALYSIS_FILE: &str = "analysis.json";

/// Flat tables written next to `analysis.json`.
pub const ANALYSIS_TABLES: &[&str] = &[
    "ranking.csv",
    "bins.csv",
    "temporal.csv",
    "pairwise.csv",
    "probe_types.csv",
    "size_groups.csv",
    "vendors.csv",
];

/// Files written by the report stage.
pub const REPORT_FILES: &[&str] = &[
    "summary.txt",
    "ranking.csv",
    "bin_curve.csv",
    "year_split.csv",
    "size_vs_rho.csv",
    "vendor_bars.csv",
];

/// Four decimals; `NA` when undefined.
pub fn format_coef(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "NA".into(),
    }
}

/// Four decimals, scientific notation below 1e-4.
pub fn format_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p > 0.0 && p < 1e-4 => format!("{p:.2e}"),
        Some(p) => format!("{p:.4}"),
        None => "NA".into(),
    }
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn corr_cells(c: Option<&CorrelationResult>) -> Vec<String> {
    vec![
        format_coef(c.map(|c| c.coefficient)),
        format_p(c.map(|c| c.p_two_sided)),
        c.map(|c| c.significance.stars()).unwrap_or("").to_string(),
        c.map(|c| c.significance.bonferroni.to_string()).unwrap_or_default(),
        opt_usize(c.map(|c| c.n)),
    ]
}

/// Models by rho descending with ties broken by name, then reference rows
/// for the overall correlations.
pub fn render_ranking_table(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    for (i, m) in report.ranked_models().into_iter().enumerate() {
        let mut r = vec![
            (i + 1).to_string(),
            m.spec.model_name.clone(),
            m.spec.vendor.clone(),
            format!("{:.1}", m.spec.params_billions),
        ];
        r.extend(corr_cells(m.correlation.as_ref()));
        r.extend([
            format_coef(m.mean_score),
            format_coef(m.correct_rate),
            format_coef(m.refusal_rate),
            m.n_papers_undefined.to_string(),
        ]);
        rows.push(r);
    }
    if let Some(o) = report.ensemble.value() {
        for (label, c) in [
            ("overall (ensemble median)", &o.ensemble_median),
            ("overall (pooled pairs)", &o.pooled),
            ("overall (pearson ln(1+c))", &o.pearson_log),
        ] {
            let mut r = vec![String::new(), label.to_string(), String::new(), String::new()];
            r.extend(corr_cells(Some(c)));
            r.extend([String::new(), String::new(), String::new(), o.n_papers_excluded.to_string()]);
            rows.push(r);
        }
    }
    csv_string(
        &[
            "rank",
            "model_name",
            "vendor",
            "params_billions",
            "rho",
            "p_two_sided",
            "stars",
            "bonferroni",
            "n",
            "mean_score",
            "correct_rate",
            "refusal_rate",
            "n_papers_undefined",
        ],
        rows,
    )
}

pub fn render_bins_table(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    for a in report.bins.value().into_iter().flatten() {
        for b in &a.bins {
            rows.push(vec![
                a.source.clone(),
                b.bin.label.clone(),
                b.bin.lower.to_string(),
                b.bin.upper.map(|u| u.to_string()).unwrap_or_default(),
                b.n_papers.to_string(),
                format_coef(b.mean_memory_score),
                format_coef(b.ci95_halfwidth),
                format_coef(b.correct_rate),
                format_coef(b.wrong_rate),
                format_coef(b.refusal_rate),
            ]);
        }
    }
    csv_string(
        &[
            "source",
            "bin",
            "lower",
            "upper",
            "n_papers",
            "mean_memory_score",
            "ci95_halfwidth",
            "correct_rate",
            "wrong_rate",
            "refusal_rate",
        ],
        rows,
    )
}

/// Bin means with the 95% band, for a line plot.
pub fn render_bin_curve(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    for a in report.bins.value().into_iter().flatten() {
        for (i, b) in a.bins.iter().enumerate() {
            let lo = b.mean_memory_score.zip(b.ci95_halfwidth).map(|(m, h)| m - h);
            let hi = b.mean_memory_score.zip(b.ci95_halfwidth).map(|(m, h)| m + h);
            rows.push(vec![
                a.source.clone(),
                i.to_string(),
                b.bin.label.clone(),
                format_coef(b.mean_memory_score),
                format_coef(lo),
                format_coef(hi),
            ]);
        }
    }
    csv_string(&["source", "bin_index", "bin", "mean", "ci_lower", "ci_upper"], rows)
}

pub fn render_temporal_table(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    if let Some(t) = report.temporal.value() {
        for (y, c) in &t.ensemble {
            let mut r = vec!["ensemble".to_string(), String::new(), y.to_string(), t.n_papers[y].to_string()];
            r.extend(corr_cells(Some(c)));
            r.push("true".into());
            rows.push(r);
        }
        for m in &t.per_model {
            for (y, cell) in &m.by_year {
                let mut r = vec![
                    "model".to_string(),
                    m.model_name.clone(),
                    y.to_string(),
                    cell.n_defined.to_string(),
                ];
                r.extend(corr_cells(cell.correlation.as_ref()));
                r.push(m.valid.to_string());
                rows.push(r);
            }
        }
    }
    csv_string(
        &["scope", "model_name", "year", "n_defined", "rho", "p_two_sided", "stars", "bonferroni", "n", "valid"],
        rows,
    )
}

/// Cohort rho per valid model and for the ensemble, for paired bars.
pub fn render_year_split(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    if let Some(t) = report.temporal.value() {
        for (y, c) in &t.ensemble {
            rows.push(vec!["ensemble".into(), y.to_string(), format_coef(Some(c.coefficient))]);
        }
        for m in t.per_model.iter().filter(|m| m.valid) {
            for (y, cell) in &m.by_year {
                rows.push(vec![
                    m.model_name.clone(),
                    y.to_string(),
                    format_coef(cell.correlation.map(|c| c.coefficient)),
                ]);
            }
        }
    }
    csv_string(&["model_name", "year", "rho"], rows)
}

pub fn render_pairwise_table(report: &AnalysisReport) -> String {
    let Some(p) = report.pairwise.value() else {
        return csv_string(&["model_name"], Vec::new());
    };
    let mut header = vec!["model_name"];
    header.extend(p.model_names.iter().map(String::as_str));
    let rows = p
        .model_names
        .iter()
        .zip(&p.coefficients)
        .map(|(name, row)| {
            let mut r = vec![name.clone()];
            r.extend(row.iter().map(|v| format_coef(*v)));
            r
        })
        .collect();
    csv_string(&header, rows)
}

pub fn render_probe_type_table(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    for t in report.probe_type.value().map(|p| p.types.as_slice()).unwrap_or_default() {
        let mut r = vec![t.probe_type.as_str().to_string(), t.n_papers.to_string()];
        r.extend(corr_cells(t.correlation.as_ref()).into_iter().take(3));
        r.push(opt_usize(t.rank_by_rho));
        let h = t.high_low.as_ref();
        r.extend([
            format_coef(h.map(|h| h.high_correct_rate)),
            format_coef(h.map(|h| h.low_correct_rate)),
            h.map(|h| format!("{:.2}", h.diff_pp)).unwrap_or_else(|| "NA".into()),
            format_coef(h.map(|h| h.t_statistic)),
            format_p(h.map(|h| h.p_value)),
            opt_usize(h.map(|h| h.n_high)),
            opt_usize(h.map(|h| h.n_low)),
            opt_usize(t.rank_by_diff),
        ]);
        rows.push(r);
    }
    csv_string(
        &[
            "probe_type",
            "n_papers",
            "rho",
            "p_two_sided",
            "stars",
            "rank_by_rho",
            "high_score",
            "low_score",
            "diff_pp",
            "t_statistic",
            "p_high_low",
            "n_high",
            "n_low",
            "rank_by_diff",
        ],
        rows,
    )
}

pub fn render_size_groups_table(report: &AnalysisReport) -> String {
    let rows = report
        .size_groups
        .value()
        .into_iter()
        .flatten()
        .map(|g| {
            vec![
                g.group.label.clone(),
                g.group.lower.to_string(),
                g.group.upper.map(|u| u.to_string()).unwrap_or_default(),
                g.n_models.to_string(),
                format_coef(g.mean_rho),
                g.models.join(";"),
            ]
        })
        .collect();
    csv_string(&["group", "lower_billions", "upper_billions", "n_models", "mean_rho", "models"], rows)
}

/// One point per model: parameter count against rho.
pub fn render_size_vs_rho(report: &AnalysisReport) -> String {
    let rows = report
        .ranked_models()
        .into_iter()
        .map(|m: &ModelResult| {
            vec![
                m.spec.model_name.clone(),
                m.spec.vendor.clone(),
                format!("{:.1}", m.spec.params_billions),
                format_coef(m.correlation.map(|c| c.coefficient)),
                m.correlation.map(|c| c.significance.p05.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    csv_string(&["model_name", "vendor", "params_billions", "rho", "significant"], rows)
}

pub fn render_vendors_table(report: &AnalysisReport) -> String {
    let rows = report
        .vendors
        .value()
        .into_iter()
        .flatten()
        .map(|v| {
            vec![
                v.vendor.clone(),
                v.n_models.to_string(),
                format_coef(v.mean_rho),
                format_coef(v.best_rho),
                v.best_model.clone().unwrap_or_default(),
                v.n_significant.to_string(),
            ]
        })
        .collect();
    csv_string(&["vendor", "n_models", "mean_rho", "best_rho", "best_model", "n_significant"], rows)
}

pub fn render_vendor_bars(report: &AnalysisReport) -> String {
    let rows = report
        .vendors
        .value()
        .into_iter()
        .flatten()
        .map(|v| vec![v.vendor.clone(), format_coef(v.mean_rho), format_coef(v.best_rho)])
        .collect();
    csv_string(&["vendor", "mean_rho", "best_rho"], rows)
}

fn corr_text(c: &CorrelationResult) -> String {
    let symbol = match c.method {
        CorrelationMethod::PearsonLog => "r",
        _ => "rho",
    };
    format!(
        "{symbol}={} p={} n={}{}",
        format_coef(Some(c.coefficient)),
        format_p(Some(c.p_two_sided)),
        c.n,
        match c.significance.stars() {
            "" => String::new(),
            s => format!(" {s}"),
        }
    )
}

fn section<T>(out: &mut String, title: &str, s: &Section<T>, body: impl FnOnce(&mut String, &T)) {
    let _ = writeln!(out, "\n[{title}]");
    match s {
        Section::Present { value } => body(out, value),
        Section::Skipped { reason } => {
            let _ = writeln!(out, "skipped: {reason}");
        }
    }
}

/// Plain-text summary with one section per analysis. The warnings section
/// is omitted when there are none.
pub fn render_summary(report: &AnalysisReport) -> String {
    let md = &report.run_metadata;
    let mut out = String::new();
    let _ = writeln!(out, "memprobe analysis summary");
    let _ = writeln!(out, "papers: {}  models: {}", md.n_papers, md.n_models);
    let _ = writeln!(out, "corpus hash: {}", md.corpus_hash);
    let _ = writeln!(out, "score table hash: {}", md.score_table_hash);
    let _ = writeln!(out, "config digest: {}", md.config_digest);
    if let Some(d) = &md.citation_snapshot_date {
        let _ = writeln!(out, "citation snapshot: {d}");
    }
    if let Some(t) = &md.analyzed_at {
        let _ = writeln!(out, "analyzed at: {t}");
    }
    let _ = writeln!(
        out,
        "significance: * p<0.05, ** p<0.01, *** p<0.001; bonferroni flag at 0.05/{}",
        md.bonferroni_tests
    );

    section(&mut out, "model ranking", &report.model_ranking, |out, _| {
        for (i, m) in report.ranked_models().into_iter().enumerate() {
            let corr = match &m.correlation {
                Some(c) => corr_text(c),
                None => format!("undefined ({})", m.undefined_reason.as_deref().unwrap_or("")),
            };
            let _ = writeln!(
                out,
                "{:>2}. {} ({}, {:.1}B)  {}",
                i + 1,
                m.spec.model_name,
                m.spec.vendor,
                m.spec.params_billions,
                corr
            );
        }
    });

    section(&mut out, "overall correlation", &report.ensemble, |out, o| {
        let _ = writeln!(out, "ensemble median: {}", corr_text(&o.ensemble_median));
        let _ = writeln!(out, "pooled (paper, model) pairs: {}", corr_text(&o.pooled));
        let _ = writeln!(out, "pearson vs ln(1+citations): {}", corr_text(&o.pearson_log));
        let _ = writeln!(out, "papers without an ensemble score: {}", o.n_papers_excluded);
    });

    section(&mut out, "sign consistency", &report.sign_test, |out, s| {
        let _ = writeln!(
            out,
            "{} of {} models positive; binomial p={} ({})",
            s.n_positive,
            s.n_models,
            format_p(Some(s.p_value)),
            match s.sidedness {
                Sidedness::OneSidedGreater => "one-sided",
                Sidedness::TwoSided => "two-sided",
            }
        );
    });

    section(&mut out, "high-low contrast", &report.high_low, |out, h| {
        let _ = writeln!(
            out,
            "top quartile {} (n={}) vs bottom quartile {} (n={}): diff {:.2} pp, t={} p={}",
            format_coef(Some(h.high_correct_rate)),
            h.n_high,
            format_coef(Some(h.low_correct_rate)),
            h.n_low,
            h.diff_pp,
            format_coef(Some(h.t_statistic)),
            format_p(Some(h.p_value))
        );
    });

    section(&mut out, "citation bins", &report.bins, |out, bins| {
        for a in bins {
            let _ = writeln!(out, "source: {}", a.source);
            for b in &a.bins {
                let _ = writeln!(
                    out,
                    "  {:>8}  n={:<4} mean={} ci95=±{} correct={} wrong={} refusal={}",
                    b.bin.label,
                    b.n_papers,
                    format_coef(b.mean_memory_score),
                    format_coef(b.ci95_halfwidth),
                    format_coef(b.correct_rate),
                    format_coef(b.wrong_rate),
                    format_coef(b.refusal_rate)
                );
            }
            match &a.trend {
                Some(t) => {
                    let _ = writeln!(out, "  trend over bins: {}", corr_text(t));
                }
                None => {
                    let _ = writeln!(out, "  trend over bins: undefined");
                }
            }
            if let Some(r) = a.rise_pp {
                let _ = writeln!(out, "  first to last bin: {r:+.2} pp");
            }
            for g in [Grade::Correct, Grade::Wrong, Grade::Refusal] {
                if let Some(c) = a.component_correlations.get(&g) {
                    let _ = writeln!(out, "  citations vs {} rate: {}", g.as_str(), corr_text(c));
                }
            }
        }
    });

    section(&mut out, "temporal split", &report.temporal, |out, t| {
        for (y, c) in &t.ensemble {
            let _ = writeln!(out, "{y}: {} papers, ensemble {}", t.n_papers[y], corr_text(c));
        }
        let _ = writeln!(
            out,
            "{} of {} valid models have higher rho in {} than in {}",
            t.n_later_higher,
            t.n_valid_models,
            t.years[t.years.len() - 1],
            t.years[0]
        );
        let _ = writeln!(out, "validity: {}", t.validity_rule);
    });

    section(&mut out, "probe types", &report.probe_type, |out, p| {
        for t in &p.types {
            let corr = t.correlation.as_ref().map(corr_text).unwrap_or_else(|| "undefined".into());
            let hl = t
                .high_low
                .map(|h| format!("diff {:.2} pp, p={}", h.diff_pp, format_p(Some(h.p_value))))
                .unwrap_or_else(|| "undefined".into());
            let _ = writeln!(
                out,
                "{}: {}; high-low {}; rank by |rho| {}, by diff {}",
                t.probe_type.as_str(),
                corr,
                hl,
                opt_usize(t.rank_by_rho),
                opt_usize(t.rank_by_diff)
            );
        }
    });

    section(&mut out, "size groups", &report.size_groups, |out, groups| {
        for g in groups {
            let _ = writeln!(out, "{}: {} model(s), mean rho {}", g.group.label, g.n_models, format_coef(g.mean_rho));
        }
    });

    section(&mut out, "pairwise agreement", &report.pairwise, |out, p| {
        let _ = writeln!(
            out,
            "mean {} (range {} to {}); within vendor {}; cross vendor {}",
            format_coef(p.overall_mean),
            format_coef(p.min),
            format_coef(p.max),
            format_coef(p.within_vendor_mean),
            format_coef(p.cross_vendor_mean)
        );
        for (v, m) in &p.per_vendor_mean {
            let _ = writeln!(out, "  {v}: {}", format_coef(Some(*m)));
        }
    });

    section(&mut out, "vendors", &report.vendors, |out, vs| {
        for v in vs {
            let _ = writeln!(
                out,
                "{}: {} model(s), mean rho {}, best {} ({}), {} significant",
                v.vendor,
                v.n_models,
                format_coef(v.mean_rho),
                format_coef(v.best_rho),
                v.best_model.as_deref().unwrap_or("NA"),
                v.n_significant
            );
        }
    });

    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\n[warnings]");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// `analysis.json` plus one flat table per analysis.
pub fn write_analysis_dir(report: &AnalysisReport, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write(dir, ANALYSIS_FILE, &report.to_json())?;
    write(dir, "ranking.csv", &render_ranking_table(report))?;
    write(dir, "bins.csv", &render_bins_table(report))?;
    write(dir, "temporal.csv", &render_temporal_table(report))?;
    write(dir, "pairwise.csv", &render_pairwise_table(report))?;
    write(dir, "probe_types.csv", &render_probe_type_table(report))?;
    write(dir, "size_groups.csv", &render_size_groups_table(report))?;
    write(dir, "vendors.csv", &render_vendors_table(report))
}

/// Summary plus plot-ready tables.
pub fn write_report_dir(report: &AnalysisReport, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write(dir, "summary.txt", &render_summary(report))?;
    write(dir, "ranking.csv", &render_ranking_table(report))?;
    write(dir, "bin_curve.csv", &render_bin_curve(report))?;
    write(dir, "year_split.csv", &render_year_split(report))?;
    write(dir, "size_vs_rho.csv", &render_size_vs_rho(report))?;
    write(dir, "vendor_bars.csv", &render_vendor_bars(report))
}
