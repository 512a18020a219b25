use std::collections::BTreeMap;

use chrono::NaiveDate;
use memprobe_core::corpus::{PaperRecord, TierSet, VenueTier};
use memprobe_core::grader::ScoreRow;
use memprobe_core::modelclient::{ModelSpec, Registry};
use memprobe_core::stats::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Independent oracles: O(n^2) ranking, two-pass Pearson.

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Full-enumeration permutation p in floating point.
fn oracle_exact_p(x: &[f64], y: &[f64]) -> f64 {
    let observed = oracle_spearman(x, y).abs();
    let perms = permutations(y);
    let hits = perms
        .iter()
        .filter(|p| oracle_spearman(x, p).abs() >= observed - 1e-9)
        .count();
    hits as f64 / perms.len() as f64
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> Vec<f64> {
    (0..n)
        .map(|_| if ties { rng.random_range(0..4) as f64 } else { rng.random::<f64>() })
        .collect()
}

#[test]
fn spearman_matches_bruteforce_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(3..=12);
        let ties = checked % 2 == 1;
        let x = random_vec(&mut rng, n, ties);
        let y = random_vec(&mut rng, n, ties);
        let Ok(r) = spearman(&x, &y) else {
            assert!(x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]));
            continue;
        };
        assert!((r.coefficient - oracle_spearman(&x, &y)).abs() < 1e-12, "{x:?} {y:?}");
        if n <= 7 {
            assert_eq!(r.method, CorrelationMethod::SpearmanExact);
            assert_eq!(r.p_two_sided, oracle_exact_p(&x, &y), "{x:?} {y:?}");
        }
        checked += 1;
    }
}

#[test]
fn exact_p_reference_value() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    let y = [2.0, 1.0, 4.0, 3.0, 7.0, 5.0, 6.0];
    let r = spearman(&x, &y).unwrap();
    assert!((r.coefficient - 0.8214285714285715).abs() < 1e-12);
    assert!((r.p_two_sided - 172.0 / 5040.0).abs() < 1e-15);
}

#[test]
fn t_approx_reference_values() {
    let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0, 8.0];
    let y = [2.7, 1.8, 2.8, 1.8, 2.8, 4.5, 0.9, 3.1, 2.2, 2.7, 3.3, 4.0];
    let r = spearman(&x, &y).unwrap();
    assert_eq!(r.method, CorrelationMethod::SpearmanTApprox);
    assert!((r.coefficient - 0.8881120757320442).abs() < 1e-12);
    assert!((r.p_two_sided - 0.0001141326784902109).abs() < 1e-9);
}

#[test]
fn pearson_log_matches_direct_formula() {
    let c = [0u64, 3, 10, 55, 400, 7, 120, 1, 22, 999];
    let v = [0.1, 0.3, 0.2, 0.5, 0.6, 0.2, 0.4, 0.35, 0.3, 0.7];
    let logc: Vec<f64> = c.iter().map(|&x| (1.0 + x as f64).ln()).collect();
    let r = pearson_log_citations(&c, &v).unwrap();
    assert!((r.coefficient - oracle_pearson(&logc, &v)).abs() < 1e-12);
    assert!((r.coefficient - 0.8790396113534773).abs() < 1e-12);
    assert!((r.p_two_sided - 0.0008073773665363543).abs() < 1e-9);
}

fn oracle_welch(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let s2 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (m, s2, n)
    };
    let (ma, sa, na) = stats(a);
    let (mb, sb, nb) = stats(b);
    let se2 = sa / na + sb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((sa / na).powi(2) / (na - 1.0) + (sb / nb).powi(2) / (nb - 1.0));
    (t, df)
}

#[test]
fn welch_matches_textbook_formula() {
    let a = [19.1, 22.4, 25.0, 17.8, 21.3, 24.9, 20.2];
    let b = [15.2, 18.9, 16.4, 14.1, 17.7, 13.9, 16.8, 15.5];
    let w = welch_t_test(&a, &b).unwrap();
    assert!((w.t - 4.5160872069651345).abs() < 1e-10);
    assert!((w.df - 9.836016367823328).abs() < 1e-10);
    assert!((w.p_two_sided - 0.0011625131135554678).abs() < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 2.0).collect();
        let w = welch_t_test(&a, &b).unwrap();
        let (t, df) = oracle_welch(&a, &b);
        assert!((w.t - t).abs() < 1e-10);
        assert!((w.df - df).abs() < 1e-10);
    }
}

#[test]
fn published_p_values_from_published_coefficients() {
    assert!((t_approx_p(0.1495, 549) - 0.0004).abs() <= 1e-4);
    assert!((t_approx_p(0.1446, 549) - 0.0007).abs() <= 1e-4);
    for (rho, p) in [(0.1355, 0.0015), (-0.0480, 0.2614), (-0.0095, 0.8236), (0.0682, 0.1103), (0.0603, 0.1584)] {
        assert!((t_approx_p(rho, 549) - p).abs() < 1e-3, "{rho}");
    }
    let mut rhos = vec![0.1; 15];
    rhos.extend([-0.0095, -0.0480]);
    let s = sign_consistency(&rhos, Sidedness::OneSidedGreater, ZeroPolicy::Exclude);
    assert!((s.p_value - 0.00117).abs() <= 1e-4);
    assert!((s.p_value - 0.0012).abs() <= 1e-4);
    for k in [8, 9] {
        let rhos: Vec<f64> = (0..17).map(|i| if i < k { 0.1 } else { -0.1 }).collect();
        let two = sign_consistency(&rhos, Sidedness::TwoSided, ZeroPolicy::Exclude);
        assert!(two.p_value > 0.5);
    }
    let eight: Vec<f64> = (0..17).map(|i| if i < 8 { 0.1 } else { -0.1 }).collect();
    assert!(sign_consistency(&eight, Sidedness::OneSidedGreater, ZeroPolicy::Exclude).p_value > 0.5);
}

/// Null distribution of the rank statistic for distinct ranks of size n.
fn exact_null(n: usize) -> BTreeMap<i64, u64> {
    let mut counts = BTreeMap::new();
    let base: Vec<f64> = (0..n).map(|i| i as f64).collect();
    for p in permutations(&base) {
        let d: i64 = p.iter().enumerate().map(|(i, &v)| (i as i64 - v as i64).pow(2)).sum();
        *counts.entry(d).or_insert(0) += 1;
    }
    counts
}

/// Largest |exact - t| over every attainable rho for n, from the oracle.
fn approximation_gap(n: usize) -> f64 {
    let null = exact_null(n);
    let total: u64 = null.values().sum();
    let denom = (n * (n * n - 1)) as f64;
    let rho = |d: i64| 1.0 - 6.0 * d as f64 / denom;
    null.keys()
        .map(|&d| rho(d))
        .filter(|r| r.abs() < 1.0)
        .map(|r| {
            let hits: u64 = null.iter().filter(|(&e, _)| rho(e).abs() >= r.abs() - 1e-12).map(|(_, c)| c).sum();
            (hits as f64 / total as f64 - t_approx_p(r, n)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn t_approximation_gap_small_n() {
    // Measured bound per n; only n = 9 is inside 0.02 on every instance.
    let bounds = [(6, 0.05), (7, 0.03), (8, 0.025), (9, 0.02)];
    let mut prev = f64::INFINITY;
    for (n, bound) in bounds {
        let gap = approximation_gap(n);
        assert!(gap < bound, "n={n} gap={gap}");
        assert!(gap < prev);
        prev = gap;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let x: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let exact = spearman(&x, &y).unwrap();
        let approx = spearman_t_approx(&x, &y).unwrap();
        assert!((exact.p_two_sided - approx.p_two_sided).abs() < 0.02);
    }
}

#[test]
fn null_calibration_at_corpus_size() {
    let mut rejections = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..549).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..549).map(|_| rng.random()).collect();
        if spearman(&x, &y).unwrap().p_two_sided < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 1000.0;
    assert!((rate - 0.05).abs() <= 0.015, "rate {rate}");
}

proptest! {
    #[test]
    fn rank_invariance(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 10..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let Ok(base) = spearman(&x, &y) else { return Ok(()) };
        let transforms: [fn(f64) -> f64; 3] = [f64::exp, |v| 3.0 * v - 7.0, |v| v * v * v];
        for f in transforms {
            let fx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
            let r = spearman(&fx, &y).unwrap();
            prop_assert!((r.coefficient - base.coefficient).abs() < 1e-12);
            let fy: Vec<f64> = y.iter().map(|&v| f(v)).collect();
            let r = spearman(&x, &fy).unwrap();
            prop_assert!((r.coefficient - base.coefficient).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_and_pair_permutation(pairs in prop::collection::vec((0u8..6, -1.0f64..1.0), 4..30), seed in any::<u64>()) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(a, b)| (a as f64, b)).unzip();
        let Ok(a) = spearman(&x, &y) else { return Ok(()) };
        let b = spearman(&y, &x).unwrap();
        prop_assert!((a.coefficient - b.coefficient).abs() < 1e-12);
        prop_assert!((a.p_two_sided - b.p_two_sided).abs() < 1e-12);
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let px: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let py: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let c = spearman(&px, &py).unwrap();
        prop_assert!((a.coefficient - c.coefficient).abs() < 1e-12);
        prop_assert!((a.p_two_sided - c.p_two_sided).abs() < 1e-12);
    }

    #[test]
    fn median_robust_to_one_constant_column(
        table in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..20),
        column in 0usize..5,
        constant in 0.0f64..1.0,
    ) {
        for row in &table {
            let before = median(row).unwrap();
            let mut sorted = row.clone();
            sorted.sort_by(f64::total_cmp);
            let mut corrupted = row.clone();
            corrupted[column] = constant;
            let after = median(&corrupted).unwrap();
            // The middle order statistic moves at most to a neighbour.
            prop_assert!(after >= sorted[1] - 1e-15 && after <= sorted[3] + 1e-15);
            if row[column] > before && constant > before {
                prop_assert_eq!(after, before);
            }
        }
    }
}

fn paper(id: usize, year: i32, citations: u64) -> PaperRecord {
    PaperRecord {
        paper_id: format!("p{id:04}"),
        title: format!("Paper {id}"),
        authors: vec!["A. Author".into()],
        venue: "ICML".into(),
        venue_tier: VenueTier::TopTier,
        year,
        citation_count: citations,
        citation_snapshot_date: NaiveDate::from_ymd_opt(2026, 5, 1).unwrap(),
        has_named_method: false,
        method_name: None,
        field_tags: vec!["cs.LG".into()],
    }
}

fn row(paper_id: &str, model: &str, value: Option<f64>) -> ScoreRow {
    ScoreRow {
        paper_id: paper_id.into(),
        model_name: model.into(),
        value,
        n_probes_scored: 20,
        n_error_excluded: 0,
        e1_mc: value,
        e2_mc: value,
        e4_mc: None,
        f1_mc: value,
        correct_rate: value,
        partial_rate: value.map(|_| 0.0),
        refusal_rate: value.map(|v| (1.0 - v) / 2.0),
        wrong_rate: value.map(|v| (1.0 - v) / 2.0),
        hallucination_rate: value.map(|_| 0.0),
    }
}

fn spec(name: &str, vendor: &str, params: f64) -> ModelSpec {
    ModelSpec {
        model_name: name.into(),
        params_billions: params,
        vendor: vendor.into(),
        family: vendor.into(),
        training_cutoff: "2024-06".into(),
    }
}

#[test]
fn ensemble_median_skips_undefined_and_reports_excluded() {
    let papers = vec![paper(0, 2023, 5), paper(1, 2023, 9)];
    let rows = vec![
        row("p0000", "a", Some(0.2)),
        row("p0000", "b", Some(0.4)),
        row("p0000", "c", Some(0.9)),
        row("p0001", "a", None),
        row("p0001", "b", None),
    ];
    let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
    let e = ensemble_median(&m);
    assert_eq!(e.values, vec![Some(0.4), None]);
    assert_eq!(e.excluded, vec!["p0001".to_string()]);
    assert_eq!(m.undefined_papers(0), vec!["p0001"]);
}

#[test]
fn unknown_paper_in_scores_is_rejected() {
    let err = ScoreMatrix::build(&[row("zz", "a", Some(0.1))], &[paper(0, 2023, 1)], &[]).unwrap_err();
    assert_eq!(err, StatsError::UnknownPaper("zz".into()));
}

#[derive(serde::Deserialize)]
struct RhoFixture {
    models: Vec<RhoEntry>,
}

#[derive(serde::Deserialize)]
struct RhoEntry {
    model_name: String,
    rho: f64,
    solved: bool,
}

fn published_rhos() -> Vec<(ModelSpec, f64)> {
    let fixture: RhoFixture =
        serde_json::from_str(include_str!("fixtures/published_model_rhos.json")).unwrap();
    let registry = Registry::reference_models();
    fixture
        .models
        .iter()
        .map(|e| (registry.get(&e.model_name).unwrap().spec.clone(), e.rho))
        .collect()
}

#[test]
fn size_groups_reproduce_published_means() {
    let models = published_rhos();
    assert_eq!(models.len(), 17);
    let groups = size_group_analysis(&models, &SizeGroup::default_groups()).unwrap();
    let expected = [(6, 0.0908), (6, 0.1059), (2, 0.0299), (3, 0.0948)];
    for (g, (n, mean)) in groups.iter().zip(expected) {
        assert_eq!(g.n_models, n, "{}", g.group.label);
        assert!((g.mean_rho.unwrap() - mean).abs() <= 0.005, "{}", g.group.label);
    }
    // Sign and significance counts implied by the same values.
    let positive = models.iter().filter(|(_, r)| *r > 0.0).count();
    assert_eq!(positive, 15);
    let sig = models.iter().filter(|(_, r)| t_approx_p(*r, 549) < 0.05).count();
    assert_eq!(sig, 9);
    let fixture: RhoFixture =
        serde_json::from_str(include_str!("fixtures/published_model_rhos.json")).unwrap();
    assert_eq!(fixture.models.iter().filter(|e| e.solved).count(), 5);
}

#[test]
fn size_group_trivial_cases() {
    let models = published_rhos();
    let one = size_group_analysis(&models, &[SizeGroup::new("all", 0.0, None)]).unwrap();
    let all_mean = models.iter().map(|(_, r)| r).sum::<f64>() / 17.0;
    assert!((one[0].mean_rho.unwrap() - all_mean).abs() < 1e-12);

    let two = vec![(spec("s", "v", 1.0), 0.3), (spec("l", "v", 50.0), -0.1)];
    let groups = vec![SizeGroup::new("a", 0.0, Some(10.0)), SizeGroup::new("b", 10.0, None)];
    let out = size_group_analysis(&two, &groups).unwrap();
    assert_eq!(out[0].mean_rho, Some(0.3));
    assert_eq!(out[1].mean_rho, Some(-0.1));
    let empty = size_group_analysis(&two[..1], &groups).unwrap();
    assert_eq!((empty[1].n_models, empty[1].mean_rho), (0, None));
}

#[test]
fn bin_fixture_rise() {
    let bins = TierSet::analysis_default();
    let mut obs = Vec::new();
    let means = [0.323, 0.33, 0.345, 0.35, 0.36, 0.37, 0.385, 0.40, 0.419];
    let cites = [0u64, 2, 7, 15, 30, 70, 150, 300, 800];
    for (m, c) in means.iter().zip(cites) {
        for d in [-0.05, 0.0, 0.05] {
            obs.push(PaperObs {
                citations: c,
                score: m + d,
                correct_rate: m + d,
                wrong_rate: 0.3,
                refusal_rate: 0.2,
            });
        }
    }
    let a = bin_analysis("fixture", &obs, &bins);
    assert_eq!(a.bins.len(), 9);
    assert!((a.bins[0].mean_memory_score.unwrap() - 0.323).abs() < 1e-12);
    assert!((a.bins[8].mean_memory_score.unwrap() - 0.419).abs() < 1e-12);
    assert!((a.rise_pp.unwrap() - 9.6).abs() < 1e-9);
    assert!((a.trend.unwrap().coefficient - 1.0).abs() < 1e-12);

    let single = TierSet::from_bounds(&[0]);
    let s = citation_bin_analysis(&obs, &single);
    let global = obs.iter().map(|o| o.score).sum::<f64>() / obs.len() as f64;
    assert_eq!(s[0].n_papers, obs.len());
    assert!((s[0].mean_memory_score.unwrap() - global).abs() < 1e-12);

    let sparse = citation_bin_analysis(&obs[..3], &bins);
    assert_eq!(sparse[4].n_papers, 0);
    assert_eq!(sparse[4].mean_memory_score, None);
}

#[test]
fn bin_trend_null_calibration() {
    let bins = TierSet::analysis_default();
    let mut significant = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<PaperObs> = (0..549)
            .map(|_| {
                let s: f64 = rng.random();
                PaperObs {
                    citations: (rng.random::<f64>() * 7.0).exp() as u64,
                    score: s,
                    correct_rate: s,
                    wrong_rate: 0.0,
                    refusal_rate: 0.0,
                }
            })
            .collect();
        if bin_analysis("null", &obs, &bins).trend.is_some_and(|t| t.p_two_sided <= 0.05) {
            significant += 1;
        }
    }
    assert!(significant <= 10, "{significant} of 200");
}

/// Ranks for n items whose Spearman against 0..n is as close to `target`
/// as adjacent swaps allow.
fn ranks_with_rho(n: usize, target: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let denom = (n * (n * n - 1)) as f64;
    let want = ((1.0 - target) * denom / 6.0).round() as i64;
    let mut perm: Vec<usize> = (0..n).collect();
    let d = |p: &[usize]| p.iter().enumerate().map(|(i, &v)| (i as i64 - v as i64).pow(2)).sum::<i64>();
    let mut cur = d(&perm);
    while cur != want {
        let i = rng.random_range(0..n - 1);
        let delta = 2 * (perm[i] as i64 - perm[i + 1] as i64);
        // An adjacent swap changes D by 2 * (p[i+1] - p[i]).
        let next = cur - delta;
        if (next - want).abs() < (cur - want).abs() {
            perm.swap(i, i + 1);
            cur = next;
            debug_assert_eq!(cur, d(&perm));
        } else if (want - cur).abs() <= 2 {
            break;
        }
    }
    perm
}

#[test]
fn temporal_fixture_matches_cohort_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut papers = Vec::new();
    let mut rows = Vec::new();
    for (year, n, target) in [(2023, 415usize, 0.0559), (2024, 134usize, 0.1880)] {
        let ranks = ranks_with_rho(n, target, &mut rng);
        for i in 0..n {
            let id = papers.len();
            papers.push(paper(id, year, (i * 3 + year as usize % 7) as u64));
            let score = ranks[i] as f64 / n as f64;
            let pid = format!("p{id:04}");
            rows.push(row(&pid, "m1", Some(score)));
            rows.push(row(&pid, "m2", Some(score)));
        }
    }
    let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
    let t = temporal_compare(&m).unwrap();
    assert!((t.ensemble[&2023].coefficient - 0.0559).abs() < 5e-5);
    assert!((t.ensemble[&2024].coefficient - 0.1880).abs() < 5e-5);
    assert_eq!(t.n_papers[&2023], 415);
    assert_eq!((t.n_valid_models, t.n_later_higher), (2, 2));
}

#[test]
fn temporal_identical_cohorts_give_equal_rho_and_flag_invalid_models() {
    let mut papers = Vec::new();
    let mut rows = Vec::new();
    let scores = [0.1, 0.5, 0.3, 0.8, 0.6, 0.7];
    for year in [2023, 2024] {
        for (i, s) in scores.iter().enumerate() {
            let id = papers.len();
            papers.push(paper(id, year, (i * 10) as u64));
            let pid = format!("p{id:04}");
            rows.push(row(&pid, "full", Some(*s)));
            // Defined for only two 2024 papers.
            let sparse = (year == 2023 || i < 2).then_some(*s);
            rows.push(row(&pid, "sparse", sparse));
        }
    }
    let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
    let t = temporal_compare(&m).unwrap();
    assert_eq!(t.ensemble[&2023].coefficient, t.ensemble[&2024].coefficient);
    let sparse = t.per_model.iter().find(|p| p.model_name == "sparse").unwrap();
    assert!(!sparse.valid);
    assert!(sparse.by_year[&2024].correlation.is_none());
    assert_eq!(sparse.by_year[&2024].n_defined, 2);
    assert_eq!(t.n_valid_models, 1);

    let one_year = m.filter_papers(|p| p.year == 2023);
    assert!(temporal_compare(&one_year).is_err());
}

#[test]
fn pairwise_duplicate_model_and_vendor_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let papers: Vec<PaperRecord> = (0..30).map(|i| paper(i, 2023, i as u64)).collect();
    let mut rows = Vec::new();
    for p in &papers {
        let base: f64 = rng.random();
        rows.push(row(&p.paper_id, "a1", Some(base)));
        rows.push(row(&p.paper_id, "a2", Some(base)));
        rows.push(row(&p.paper_id, "b1", Some(rng.random())));
    }
    let specs = vec![spec("a1", "A", 1.0), spec("a2", "A", 2.0), spec("b1", "B", 3.0)];
    let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
    let pw = pairwise_model_agreement(&m, &specs).unwrap();
    assert!((pw.coefficients[0][1].unwrap() - 1.0).abs() < 1e-12);
    for a in 0..3 {
        assert_eq!(pw.coefficients[a][a], Some(1.0));
        for b in 0..3 {
            assert_eq!(pw.coefficients[a][b], pw.coefficients[b][a]);
        }
    }
    assert!(pw.within_vendor_mean.unwrap() > pw.cross_vendor_mean.unwrap());
    assert_eq!(pw.per_vendor_mean.len(), 1);
}

#[test]
fn pairwise_needs_three_joint_papers() {
    let papers: Vec<PaperRecord> = (0..5).map(|i| paper(i, 2023, i as u64)).collect();
    let mut rows = Vec::new();
    for (i, p) in papers.iter().enumerate() {
        rows.push(row(&p.paper_id, "a", Some(i as f64 / 5.0)));
        rows.push(row(&p.paper_id, "b", (i < 2).then_some(0.5 + i as f64 / 10.0)));
    }
    let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
    let pw = pairwise_model_agreement(&m, &[spec("a", "X", 1.0), spec("b", "Y", 1.0)]).unwrap();
    assert_eq!(pw.coefficients[0][1], None);
    assert_eq!(pw.overall_mean, None);
}

#[test]
fn pairwise_null_calibration() {
    let mut small = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let papers: Vec<PaperRecord> = (0..549).map(|i| paper(i, 2023, i as u64)).collect();
        let names = ["m0", "m1", "m2", "m3"];
        let rows: Vec<ScoreRow> = papers
            .iter()
            .flat_map(|p| names.map(|n| row(&p.paper_id, n, Some(rng.random()))))
            .collect();
        let specs: Vec<ModelSpec> = names.iter().map(|n| spec(n, "V", 1.0)).collect();
        let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
        let pw = pairwise_model_agreement(&m, &specs).unwrap();
        let offdiag: Vec<f64> = (0..4)
            .flat_map(|a| (a + 1..4).map(move |b| (a, b)))
            .map(|(a, b)| pw.coefficients[a][b].unwrap().abs())
            .collect();
        if offdiag.iter().sum::<f64>() / offdiag.len() as f64 > 0.1 {
            continue;
        }
        small += 1;
    }
    assert!(small >= 19);
}

#[test]
fn probe_type_absent_type_and_identical_types() {
    let papers: Vec<PaperRecord> = (0..40).map(|i| paper(i, 2023, (i * i) as u64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<ScoreRow> = papers
        .iter()
        .map(|p| row(&p.paper_id, "m", Some(rng.random::<f64>() * 0.5 + p.citation_count as f64 / 3000.0)))
        .collect();
    let m = ScoreMatrix::build(&rows, &papers, &[]).unwrap();
    let power = probe_type_power(&m);
    assert_eq!(power.types.len(), 3);
    assert!(power.types.iter().all(|t| t.probe_type != memprobe_core::probegen::ProbeType::E4Method));
    assert!(power.notices.iter().any(|n| n.starts_with("E4_mc")));
    let first = &power.types[0];
    for t in &power.types {
        assert_eq!(t.correlation, first.correlation);
        assert_eq!(t.high_low, first.high_low);
    }
}

#[test]
fn model_results_and_overall() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let papers: Vec<PaperRecord> = (0..60).map(|i| paper(i, 2023, rng.random_range(0..300))).collect();
    let mut rows = Vec::new();
    for p in &papers {
        let signal = (p.citation_count as f64).ln_1p() / 6.0;
        rows.push(row(&p.paper_id, "good", Some((0.3 * signal + 0.7 * rng.random::<f64>()).min(1.0))));
        rows.push(row(&p.paper_id, "noise", Some(rng.random())));
        rows.push(row(&p.paper_id, "flat", Some(0.5)));
    }
    let specs = vec![spec("good", "A", 3.0), spec("noise", "B", 7.0), spec("flat", "B", 14.0)];
    let m = ScoreMatrix::build(&rows, &papers, &["good".into(), "noise".into(), "flat".into()]).unwrap();
    let res = model_results(&m, &specs).unwrap();
    assert!(res[0].correlation.unwrap().coefficient > 0.0);
    assert!(res[2].correlation.is_none());
    assert!(res[2].undefined_reason.is_some());
    let overall = overall_correlation(&m).unwrap();
    assert_eq!(overall.ensemble_median.n, 60);
    assert_eq!(overall.pooled.n, 180);
    let vendors = vendor_summary(&res);
    assert_eq!(vendors.len(), 2);
    assert_eq!(vendors[1].n_models, 2);
    assert_eq!(vendors[1].best_model.as_deref(), Some("noise"));
}
