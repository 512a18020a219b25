use std::fs;
use std::path::Path;

use memprobe_core::corpus::demo::generate_demo_corpus;
use memprobe_core::corpus::PaperRecord;
use memprobe_core::grader::ScoreRow;
use memprobe_core::modelclient::{ModelSpec, Registry};
use memprobe_core::report::{
    analyze, render_ranking_table, render_summary, write_analysis_dir, write_report_dir, AnalysisOptions,
    AnalysisReport, Section, ANALYSIS_FILE, REPORT_FILES,
};
use memprobe_core::stats::{t_approx_p, CorrelationMethod, CorrelationResult, ModelResult, SignificanceFlags};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

fn row(paper: &str, model: &str, value: Option<f64>) -> ScoreRow {
    let scored = if value.is_some() { 20 } else { 0 };
    ScoreRow {
        paper_id: paper.into(),
        model_name: model.into(),
        value,
        n_probes_scored: scored,
        n_error_excluded: 20 - scored,
        e1_mc: value,
        e2_mc: value,
        e4_mc: value,
        f1_mc: value,
        correct_rate: value,
        partial_rate: value.map(|_| 0.0),
        refusal_rate: value.map(|_| 0.1),
        wrong_rate: value.map(|v| (0.9 - v).max(0.0)),
        hallucination_rate: value.map(|_| 0.0),
    }
}

/// Scores rising with log citations plus model-specific noise.
fn synthetic_rows(corpus: &[PaperRecord], models: &[&str], seed: u64) -> Vec<ScoreRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for m in models {
        for p in corpus {
            let v = (0.2 + 0.03 * p.log_citations() + rng.random_range(-0.15..0.15)).clamp(0.0, 0.85);
            rows.push(row(&p.paper_id, m, Some((v * 20.0).round() / 20.0)));
        }
    }
    rows
}

fn specs(names: &[&str]) -> Vec<ModelSpec> {
    let registry = Registry::reference_models();
    names.iter().map(|n| registry.get(n).unwrap().spec.clone()).collect()
}

const THREE: [&str; 3] = ["Qwen2.5-7B-Instruct", "Llama-3.2-3B-Instruct", "gemma-2-9b-it"];

fn fixture_report() -> AnalysisReport {
    let corpus = generate_demo_corpus();
    let rows = synthetic_rows(&corpus, &THREE, 42);
    analyze(&rows, &corpus, &specs(&THREE), &AnalysisOptions::default()).unwrap()
}

#[test]
fn summary_matches_golden_file() {
    let summary = render_summary(&fixture_report());
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_summary.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &summary).unwrap();
    }
    let expected = fs::read_to_string(&golden).expect("golden file; rerun with UPDATE_GOLDEN=1 to create");
    assert_eq!(summary, expected);
}

#[derive(Deserialize)]
struct Published {
    models: Vec<PublishedModel>,
}

#[derive(Deserialize)]
struct PublishedModel {
    model_name: String,
    rho: f64,
}

#[test]
fn ranking_of_published_coefficients() {
    let text = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/published_model_rhos.json"),
    )
    .unwrap();
    let published: Published = serde_json::from_str(&text).unwrap();
    let registry = Registry::reference_models();
    let results: Vec<ModelResult> = published
        .models
        .iter()
        .map(|m| {
            let p = t_approx_p(m.rho, 549);
            ModelResult {
                spec: registry.get(&m.model_name).unwrap().spec.clone(),
                correlation: Some(CorrelationResult {
                    coefficient: m.rho,
                    p_two_sided: p,
                    n: 549,
                    method: CorrelationMethod::SpearmanTApprox,
                    significance: SignificanceFlags::new(p, 17),
                }),
                undefined_reason: None,
                n_papers_defined: 549,
                n_papers_undefined: 0,
                mean_score: None,
                correct_rate: None,
                refusal_rate: None,
            }
        })
        .collect();
    let mut report = fixture_report();
    report.model_ranking = Section::Present { value: results };
    let table = render_ranking_table(&report);
    let first = table.lines().nth(1).unwrap();
    assert!(first.starts_with("1,Llama-3.2-3B-Instruct,Meta,3.0,0.1829,"), "{first}");
    assert!(first.contains(",***,"), "{first}");
    let ranked = report.ranked_models();
    assert_eq!(ranked.len(), 17);
    assert!(ranked.windows(2).all(|w| w[0].correlation.unwrap().coefficient >= w[1].correlation.unwrap().coefficient));
    let n_sig = ranked.iter().filter(|m| m.correlation.unwrap().significance.p05).count();
    assert_eq!(n_sig, 9);
}

#[test]
fn identical_models_tie_break_by_name() {
    let corpus = generate_demo_corpus();
    let mut rows = synthetic_rows(&corpus, &["Qwen2.5-7B-Instruct"], 1);
    rows.extend(rows.clone().into_iter().map(|mut r| {
        r.model_name = "Llama-3.2-3B-Instruct".into();
        r
    }));
    let report = analyze(
        &rows,
        &corpus,
        &specs(&["Qwen2.5-7B-Instruct", "Llama-3.2-3B-Instruct"]),
        &AnalysisOptions::default(),
    )
    .unwrap();
    let names: Vec<_> = report.ranked_models().iter().map(|m| m.spec.model_name.clone()).collect();
    assert_eq!(names, ["Llama-3.2-3B-Instruct", "Qwen2.5-7B-Instruct"]);
}

#[test]
fn single_model_report_renders() {
    let corpus = generate_demo_corpus();
    let rows = synthetic_rows(&corpus, &["Qwen2.5-7B-Instruct"], 3);
    let report = analyze(&rows, &corpus, &specs(&["Qwen2.5-7B-Instruct"]), &AnalysisOptions::default()).unwrap();
    assert_eq!(report.ranked_models().len(), 1);
    assert!(report.pairwise.skip_reason().is_some());
    let summary = render_summary(&report);
    assert!(summary.contains("[pairwise agreement]\nskipped: "), "{summary}");
}

#[test]
fn all_error_papers_are_listed_in_warnings() {
    let corpus = generate_demo_corpus();
    let mut rows = synthetic_rows(&corpus, &THREE, 8);
    let dead = [corpus[0].paper_id.clone(), corpus[1].paper_id.clone()];
    for r in rows.iter_mut().filter(|r| r.model_name == THREE[0] && dead.contains(&r.paper_id)) {
        *r = row(&r.paper_id, &r.model_name, None);
    }
    let report = analyze(&rows, &corpus, &specs(&THREE), &AnalysisOptions::default()).unwrap();
    let w = report
        .warnings
        .iter()
        .find(|w| w.contains("score undefined"))
        .expect("undefined-score warning");
    assert!(w.starts_with(THREE[0]) && w.contains(&dead[0]) && w.contains(&dead[1]), "{w}");
    let ranked = report.ranked_models();
    let m = ranked.iter().find(|m| m.spec.model_name == THREE[0]).unwrap();
    assert_eq!(m.n_papers_undefined, 2);
    assert_eq!(m.correlation.unwrap().n, 547);
    assert!(render_summary(&report).contains("[warnings]"));
}

#[test]
fn empty_warnings_omit_the_section() {
    let report = fixture_report();
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    assert!(!render_summary(&report).contains("[warnings]"));
}

#[test]
fn analysis_round_trips_and_report_is_deterministic() {
    let report = fixture_report();
    let a = tempfile::tempdir().unwrap();
    write_analysis_dir(&report, a.path()).unwrap();
    let back = AnalysisReport::read(&a.path().join(ANALYSIS_FILE)).unwrap();
    assert_eq!(back, report);

    let (r1, r2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_report_dir(&back, r1.path()).unwrap();
    write_report_dir(&fixture_report(), r2.path()).unwrap();
    for f in REPORT_FILES {
        assert_eq!(fs::read(r1.path().join(f)).unwrap(), fs::read(r2.path().join(f)).unwrap(), "{f}");
    }
}

